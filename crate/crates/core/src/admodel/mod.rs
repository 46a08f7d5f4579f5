//! Feed-forward networks with exact derivatives.
//!
//! A network maps `z₀ = x` through `z_j = ρ_j(U_j z_{j−1} + b_j)`; hidden
//! layers share one activation and the last layer has its own
//! (`output_activation`, usually [`Activation::Identity`]).
//!
//! Parameters are packed into one flat vector: all weight matrices first,
//! layer by layer, each row-major (`U_j` is `w_j × w_{j−1}`), then all bias
//! vectors layer by layer. [`MlpSpec::weight_offset`] and
//! [`MlpSpec::bias_offset`] give the start of each block.
//!
//! Three derivative pathways are provided:
//!
//! * reverse accumulation for `∇_θ (uᵀ h_θ(x))` ([`param_gradient`]),
//! * order-2 jets along an input direction for `h`, `∂h`, `∂²h`
//!   ([`input_jet`]) with a reverse sweep over the jet computation for
//!   parameter gradients of derivative quantities ([`jet_param_gradient`]),
//! * dual numbers pushed through the generic passes, which give exact
//!   first input derivatives and parameter Hessian-vector products.

mod gradcheck;
mod jet;
mod scalar;

pub use gradcheck::{central_difference_gradient, fd_step, gradcheck, GradcheckReport};
pub use jet::{input_jet, input_jet_dir, jet_param_gradient, residual_param_gradient, Jet2};
pub use scalar::{Dual, Scalar};

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::numkit::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Sigmoid,
    ReLU,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::ReLU => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::ReLU)
    }

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::ReLU => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// `[ρ, ρ', ρ'', ρ''']` at `x`. ReLU uses the zero subgradient at the kink.
    #[inline]
    pub fn derivatives(self, x: f64) -> [f64; 4] {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                let s = 1.0 - t * t;
                [t, s, -2.0 * t * s, -2.0 * s * (1.0 - 3.0 * t * t)]
            }
            Activation::Sigmoid => {
                let s = sigmoid(x);
                let d = s * (1.0 - s);
                [s, d, d * (1.0 - 2.0 * s), d * (1.0 - 6.0 * s + 6.0 * s * s)]
            }
            Activation::ReLU => {
                if x > 0.0 {
                    [x, 1.0, 0.0, 0.0]
                } else {
                    [0.0, 0.0, 0.0, 0.0]
                }
            }
            Activation::Identity => [x, 1.0, 0.0, 0.0],
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    pub fn new(
        layer_widths: Vec<usize>,
        activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(invalid("an MLP needs at least input and output widths"));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(invalid("layer widths must be positive"));
        }
        Ok(Self {
            layer_widths,
            activation,
            output_activation,
        })
    }

    /// Tanh hidden layers, identity output.
    pub fn tanh(layer_widths: &[usize]) -> Result<Self> {
        Self::new(
            layer_widths.to_vec(),
            Activation::Tanh,
            Activation::Identity,
        )
    }

    pub fn d_in(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn d_out(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    pub fn num_weights(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn num_params(&self) -> usize {
        self.num_weights() + self.layer_widths[1..].iter().sum::<usize>()
    }

    /// Start of `U_{layer+1}` (0-based layer index) in the packed vector.
    pub fn weight_offset(&self, layer: usize) -> usize {
        self.layer_widths
            .windows(2)
            .take(layer)
            .map(|w| w[0] * w[1])
            .sum()
    }

    pub fn bias_offset(&self, layer: usize) -> usize {
        self.num_weights() + self.layer_widths[1..=layer].iter().sum::<usize>()
    }

    pub fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.num_layers() {
            self.output_activation
        } else {
            self.activation
        }
    }

    pub fn is_smooth(&self) -> bool {
        self.activation.is_smooth() && self.output_activation.is_smooth()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_xavier(&self, rng: &mut RngStream) -> Vec<f64> {
        let mut theta = vec![0.0; self.num_params()];
        for l in 0..self.num_layers() {
            let fan_in = self.layer_widths[l];
            let fan_out = self.layer_widths[l + 1];
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let off = self.weight_offset(l);
            for w in &mut theta[off..off + fan_in * fan_out] {
                *w = -bound + 2.0 * bound * rng.next_f64();
            }
        }
        theta
    }

    pub(crate) fn check(&self, theta_len: usize, x_len: usize) -> Result<()> {
        if theta_len != self.num_params() {
            return Err(dim_err(format!(
                "parameter vector has {theta_len} entries, network needs {}",
                self.num_params()
            )));
        }
        if x_len != self.d_in() {
            return Err(dim_err(format!(
                "input has {x_len} entries, network expects {}",
                self.d_in()
            )));
        }
        Ok(())
    }
}

/// Forward pass, generic over the scalar type.
pub fn forward_generic<T: Scalar>(spec: &MlpSpec, theta: &[T], x: &[T]) -> Vec<T> {
    let mut z = x.to_vec();
    for l in 0..spec.num_layers() {
        let (a, _) = affine_activate(spec, theta, l, &z);
        z = a;
    }
    z
}

fn affine_activate<T: Scalar>(spec: &MlpSpec, theta: &[T], l: usize, z: &[T]) -> (Vec<T>, Vec<T>) {
    let w_in = spec.layer_widths[l];
    let w_out = spec.layer_widths[l + 1];
    let wo = spec.weight_offset(l);
    let bo = spec.bias_offset(l);
    let act = spec.layer_activation(l);
    let mut out = Vec::with_capacity(w_out);
    let mut dout = Vec::with_capacity(w_out);
    for i in 0..w_out {
        let row = &theta[wo + i * w_in..wo + (i + 1) * w_in];
        let mut a = theta[bo + i];
        for (u, zj) in row.iter().zip(z) {
            a += *u * *zj;
        }
        let (f, df) = a.activate(act);
        out.push(f);
        dout.push(df);
    }
    (out, dout)
}

/// Output and `∇_θ (upstreamᵀ h_θ(x))`, generic over the scalar type.
pub fn backprop_generic<T: Scalar>(
    spec: &MlpSpec,
    theta: &[T],
    x: &[T],
    upstream: &[T],
) -> (Vec<T>, Vec<T>) {
    let nl = spec.num_layers();
    let mut zs: Vec<Vec<T>> = Vec::with_capacity(nl + 1);
    let mut ds: Vec<Vec<T>> = Vec::with_capacity(nl);
    zs.push(x.to_vec());
    for l in 0..nl {
        let (z, d) = affine_activate(spec, theta, l, &zs[l]);
        zs.push(z);
        ds.push(d);
    }
    let mut grad = vec![T::zero(); theta.len()];
    let mut g: Vec<T> = upstream.to_vec();
    for l in (0..nl).rev() {
        let w_in = spec.layer_widths[l];
        let w_out = spec.layer_widths[l + 1];
        let wo = spec.weight_offset(l);
        let bo = spec.bias_offset(l);
        let abar: Vec<T> = g.iter().zip(&ds[l]).map(|(gi, di)| *gi * *di).collect();
        let zin = &zs[l];
        let mut gin = vec![T::zero(); w_in];
        for i in 0..w_out {
            let ai = abar[i];
            grad[bo + i] += ai;
            let base = wo + i * w_in;
            for j in 0..w_in {
                grad[base + j] += ai * zin[j];
                gin[j] += theta[base + j] * ai;
            }
        }
        g = gin;
    }
    (zs.pop().unwrap(), grad)
}

pub fn forward(spec: &MlpSpec, theta: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    spec.check(theta.len(), x.len())?;
    Ok(forward_generic(spec, theta, x))
}

/// `∇_θ (upstreamᵀ h_θ(x))` by reverse accumulation.
pub fn param_gradient(spec: &MlpSpec, theta: &[f64], x: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
    spec.check(theta.len(), x.len())?;
    if upstream.len() != spec.d_out() {
        return Err(dim_err("upstream length must equal the output width"));
    }
    Ok(backprop_generic(spec, theta, x, upstream).1)
}

/// Rows `∇_θ h_o(x)ᵀ`, one per output.
pub fn param_jacobian(spec: &MlpSpec, theta: &[f64], x: &[f64]) -> Result<Matrix> {
    spec.check(theta.len(), x.len())?;
    let d_out = spec.d_out();
    let n = spec.num_params();
    let mut jac = Matrix::zeros(d_out, n);
    let mut seed = vec![0.0; d_out];
    for o in 0..d_out {
        seed.fill(0.0);
        seed[o] = 1.0;
        let (_, g) = backprop_generic(spec, theta, x, &seed);
        jac.row_mut(o).copy_from_slice(&g);
    }
    Ok(jac)
}

/// `∇²_θ (upstreamᵀ h_θ(x)) · v`, exact, by pushing `θ + ε v` through backprop.
pub fn param_hvp(spec: &MlpSpec, theta: &[f64], x: &[f64], upstream: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    spec.check(theta.len(), x.len())?;
    if v.len() != theta.len() {
        return Err(dim_err("direction length must equal the parameter count"));
    }
    let td: Vec<Dual> = theta.iter().zip(v).map(|(t, d)| Dual::new(*t, *d)).collect();
    let xd: Vec<Dual> = x.iter().map(|v| Dual::constant(*v)).collect();
    let ud: Vec<Dual> = upstream.iter().map(|v| Dual::constant(*v)).collect();
    let (_, g) = backprop_generic(spec, &td, &xd, &ud);
    Ok(g.into_iter().map(|d| d.d).collect())
}

/// Outputs with their derivative along input coordinate `coord`, via dual numbers.
pub fn forward_dual(spec: &MlpSpec, theta: &[f64], x: &[f64], coord: usize) -> Result<Vec<Dual>> {
    spec.check(theta.len(), x.len())?;
    if coord >= spec.d_in() {
        return Err(dim_err(format!("coordinate {coord} out of range")));
    }
    let td: Vec<Dual> = theta.iter().map(|t| Dual::constant(*t)).collect();
    let xd: Vec<Dual> = x
        .iter()
        .enumerate()
        .map(|(i, v)| Dual::new(*v, if i == coord { 1.0 } else { 0.0 }))
        .collect();
    Ok(forward_generic(spec, &td, &xd))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_net(widths: &[usize], seed: u64) -> (MlpSpec, Vec<f64>) {
        let spec = MlpSpec::tanh(widths).unwrap();
        let mut rng = RngStream::new(seed);
        let mut theta = spec.init_xavier(&mut rng);
        for t in theta.iter_mut() {
            *t += 0.1 * rng.std_normal();
        }
        (spec, theta)
    }

    #[test]
    fn packing_layout() {
        let spec = MlpSpec::tanh(&[2, 3, 1]).unwrap();
        assert_eq!(spec.num_params(), 2 * 3 + 3 * 1 + 3 + 1);
        assert_eq!(spec.weight_offset(0), 0);
        assert_eq!(spec.weight_offset(1), 6);
        assert_eq!(spec.bias_offset(0), 9);
        assert_eq!(spec.bias_offset(1), 12);
    }

    #[test]
    fn identity_layer_passes_through() {
        let spec = MlpSpec::new(vec![3, 3], Activation::Identity, Activation::Identity).unwrap();
        let mut theta = vec![0.0; spec.num_params()];
        for i in 0..3 {
            theta[i * 3 + i] = 1.0;
        }
        let x = [0.3, -1.2, 2.0];
        assert_eq!(forward(&spec, &theta, &x).unwrap(), x.to_vec());
    }

    #[test]
    fn tanh_scalar_at_zero() {
        let spec = MlpSpec::new(vec![1, 1], Activation::Tanh, Activation::Tanh).unwrap();
        assert_eq!(forward(&spec, &[1.0, 0.0], &[0.0]).unwrap(), vec![0.0]);
    }

    /// Straight-line re-implementation of the layer recursion.
    fn reference_forward(spec: &MlpSpec, theta: &[f64], x: &[f64]) -> Vec<f64> {
        let mut z = x.to_vec();
        let mut w_cursor = 0;
        let mut b_cursor = spec.num_weights();
        for l in 0..spec.num_layers() {
            let (n_in, n_out) = (spec.layer_widths[l], spec.layer_widths[l + 1]);
            let act = if l + 1 == spec.num_layers() {
                spec.output_activation
            } else {
                spec.activation
            };
            let mut next = vec![0.0; n_out];
            for i in 0..n_out {
                let mut a = theta[b_cursor + i];
                for j in 0..n_in {
                    a += theta[w_cursor + i * n_in + j] * z[j];
                }
                next[i] = act.apply(a);
            }
            w_cursor += n_in * n_out;
            b_cursor += n_out;
            z = next;
        }
        z
    }

    #[test]
    fn forward_matches_reference_recursion() {
        let (spec, theta) = random_net(&[3, 7, 5, 2], 17);
        for k in 0..5 {
            let x = [0.1 * k as f64, -0.4, 0.9];
            assert_eq!(
                forward(&spec, &theta, &x).unwrap(),
                reference_forward(&spec, &theta, &x)
            );
        }
    }

    #[test]
    fn linear_layer_gradient_is_outer_product() {
        let spec = MlpSpec::new(vec![3, 2], Activation::Identity, Activation::Identity).unwrap();
        let theta: Vec<f64> = (0..spec.num_params()).map(|i| i as f64 * 0.1).collect();
        let x = [1.0, -2.0, 0.5];
        let u = [0.7, -1.3];
        let g = param_gradient(&spec, &theta, &x, &u).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert_eq!(g[i * 3 + j], u[i] * x[j]);
            }
            assert_eq!(g[6 + i], u[i]);
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let (spec, theta) = random_net(&[2, 4, 1], 3);
        let g = param_gradient(&spec, &theta, &[0.2, 0.3], &[0.0]).unwrap();
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (spec, theta) = random_net(&[2, 6, 4, 1], 5);
        let x = [0.3, -0.7];
        let g = param_gradient(&spec, &theta, &x, &[1.0]).unwrap();
        let fd = central_difference_gradient(|t| forward(&spec, t, &x).unwrap()[0], &theta);
        for (a, b) in g.iter().zip(&fd) {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-6);
            assert!(rel <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn gradient_linear_in_upstream() {
        let (spec, theta) = random_net(&[2, 5, 3], 8);
        let x = [0.4, 0.1];
        let u1 = [1.0, -2.0, 0.5];
        let u2 = [0.25, 0.5, -1.0];
        let a = 2.0;
        let comb: Vec<f64> = u1.iter().zip(&u2).map(|(p, q)| a * p + q).collect();
        let g1 = param_gradient(&spec, &theta, &x, &u1).unwrap();
        let g2 = param_gradient(&spec, &theta, &x, &u2).unwrap();
        let gc = param_gradient(&spec, &theta, &x, &comb).unwrap();
        for i in 0..gc.len() {
            assert!((gc[i] - (a * g1[i] + g2[i])).abs() <= 1e-14 * (1.0 + gc[i].abs()));
        }
    }

    #[test]
    fn hvp_matches_gradient_differences() {
        let (spec, theta) = random_net(&[1, 5, 1], 21);
        let x = [0.35];
        let mut rng = RngStream::new(4);
        let v: Vec<f64> = (0..theta.len()).map(|_| rng.std_normal()).collect();
        let hv = param_hvp(&spec, &theta, &x, &[1.0], &v).unwrap();
        let h = 1e-5;
        let tp: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t + h * d).collect();
        let tm: Vec<f64> = theta.iter().zip(&v).map(|(t, d)| t - h * d).collect();
        let gp = param_gradient(&spec, &tp, &x, &[1.0]).unwrap();
        let gm = param_gradient(&spec, &tm, &x, &[1.0]).unwrap();
        for i in 0..hv.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * h);
            assert!((hv[i] - fd).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn dimension_errors() {
        let spec = MlpSpec::tanh(&[2, 3, 1]).unwrap();
        let theta = vec![0.0; spec.num_params()];
        assert!(forward(&spec, &theta, &[1.0]).is_err());
        assert!(forward(&spec, &theta[1..], &[1.0, 2.0]).is_err());
        assert!(param_gradient(&spec, &theta, &[1.0, 2.0], &[1.0, 1.0]).is_err());
        assert!(MlpSpec::tanh(&[3]).is_err());
    }

    #[test]
    fn xavier_bounds_and_zero_bias() {
        let spec = MlpSpec::tanh(&[4, 6, 2]).unwrap();
        let theta = spec.init_xavier(&mut RngStream::new(1));
        let b0 = (6.0_f64 / 10.0).sqrt();
        assert!(theta[..24].iter().all(|w| w.abs() <= b0));
        assert!(theta[spec.num_weights()..].iter().all(|b| *b == 0.0));
    }
}
