use serde::{Deserialize, Serialize};

use super::MlpSpec;
use crate::error::{dim_err, invalid, Error, Result};
use crate::problems::PdeForm;

/// Value with first and second derivative along one input direction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(value: f64, d1: f64, d2: f64) -> Self {
        Self { value, d1, d2 }
    }
}

struct JetTape {
    /// Layer inputs, `zs[0]` is the seeded input.
    zs: Vec<Vec<Jet2>>,
    /// Pre-activations per layer.
    pre: Vec<Vec<Jet2>>,
}

fn check_smooth(spec: &MlpSpec) -> Result<()> {
    for act in [spec.activation, spec.output_activation] {
        if !act.is_smooth() {
            return Err(Error::NonSmoothActivation(act.name()));
        }
    }
    Ok(())
}

fn jet_forward(spec: &MlpSpec, theta: &[f64], x: &[f64], dir: &[f64]) -> JetTape {
    let nl = spec.num_layers();
    let mut zs = Vec::with_capacity(nl + 1);
    let mut pre = Vec::with_capacity(nl);
    zs.push(
        x.iter()
            .zip(dir)
            .map(|(v, d)| Jet2::new(*v, *d, 0.0))
            .collect::<Vec<_>>(),
    );
    for l in 0..nl {
        let w_in = spec.layer_widths[l];
        let w_out = spec.layer_widths[l + 1];
        let wo = spec.weight_offset(l);
        let bo = spec.bias_offset(l);
        let act = spec.layer_activation(l);
        let z = &zs[l];
        let mut a_layer = Vec::with_capacity(w_out);
        let mut z_next = Vec::with_capacity(w_out);
        for i in 0..w_out {
            let row = &theta[wo + i * w_in..wo + (i + 1) * w_in];
            let mut a = Jet2::new(theta[bo + i], 0.0, 0.0);
            for (u, zj) in row.iter().zip(z) {
                a.value += u * zj.value;
                a.d1 += u * zj.d1;
                a.d2 += u * zj.d2;
            }
            let [f0, f1, f2, _] = act.derivatives(a.value);
            z_next.push(Jet2::new(f0, f1 * a.d1, f2 * a.d1 * a.d1 + f1 * a.d2));
            a_layer.push(a);
        }
        pre.push(a_layer);
        zs.push(z_next);
    }
    JetTape { zs, pre }
}

/// Output jets along input coordinate `coord`.
pub fn input_jet(spec: &MlpSpec, theta: &[f64], x: &[f64], coord: usize) -> Result<Vec<Jet2>> {
    if coord >= spec.d_in() {
        return Err(dim_err(format!(
            "coordinate {coord} out of range for input width {}",
            spec.d_in()
        )));
    }
    let mut dir = vec![0.0; spec.d_in()];
    dir[coord] = 1.0;
    input_jet_dir(spec, theta, x, &dir)
}

/// Output jets along an arbitrary input direction (e.g. a boundary normal).
pub fn input_jet_dir(spec: &MlpSpec, theta: &[f64], x: &[f64], dir: &[f64]) -> Result<Vec<Jet2>> {
    check_smooth(spec)?;
    spec.check(theta.len(), x.len())?;
    if dir.len() != x.len() {
        return Err(dim_err("direction length must equal the input width"));
    }
    Ok(jet_forward(spec, theta, x, dir).zs.pop().unwrap())
}

/// Reverse sweep over the jet computation.
///
/// `seeds[o] = (s_v, s_1, s_2)` weights the value, first and second
/// derivative of output `o`. Returns the output jets and
/// `∇_θ Σ_o (s_v h_o + s_1 ∂h_o + s_2 ∂²h_o)`.
pub fn jet_param_gradient(
    spec: &MlpSpec,
    theta: &[f64],
    x: &[f64],
    dir: &[f64],
    seeds: &[Jet2],
) -> Result<(Vec<Jet2>, Vec<f64>)> {
    check_smooth(spec)?;
    spec.check(theta.len(), x.len())?;
    if dir.len() != x.len() {
        return Err(dim_err("direction length must equal the input width"));
    }
    if seeds.len() != spec.d_out() {
        return Err(dim_err("one seed per output is required"));
    }
    let tape = jet_forward(spec, theta, x, dir);
    let mut grad = vec![0.0; theta.len()];
    let mut g: Vec<Jet2> = seeds.to_vec();
    for l in (0..spec.num_layers()).rev() {
        let w_in = spec.layer_widths[l];
        let w_out = spec.layer_widths[l + 1];
        let wo = spec.weight_offset(l);
        let bo = spec.bias_offset(l);
        let act = spec.layer_activation(l);
        let zin = &tape.zs[l];
        let mut gin = vec![Jet2::default(); w_in];
        for i in 0..w_out {
            let a = tape.pre[l][i];
            let s = g[i];
            let [_, f1, f2, f3] = act.derivatives(a.value);
            let bar_v = s.value * f1 + s.d1 * f2 * a.d1 + s.d2 * (f3 * a.d1 * a.d1 + f2 * a.d2);
            let bar_1 = s.d1 * f1 + 2.0 * s.d2 * f2 * a.d1;
            let bar_2 = s.d2 * f1;
            grad[bo + i] += bar_v;
            let base = wo + i * w_in;
            for j in 0..w_in {
                let z = zin[j];
                grad[base + j] += bar_v * z.value + bar_1 * z.d1 + bar_2 * z.d2;
                let u = theta[base + j];
                gin[j].value += u * bar_v;
                gin[j].d1 += u * bar_1;
                gin[j].d2 += u * bar_2;
            }
        }
        g = gin;
    }
    let mut zs = tape.zs;
    Ok((zs.pop().unwrap(), grad))
}

/// PDE residual `N[h_θ](x) − q(x)` and its parameter gradient, for a
/// scalar-output network on a 1-D domain.
pub fn residual_param_gradient(
    spec: &MlpSpec,
    theta: &[f64],
    x: &[f64],
    pde: &PdeForm,
) -> Result<(f64, Vec<f64>)> {
    pde.validate()?;
    if spec.d_in() != 1 || spec.d_out() != 1 {
        return Err(invalid("PDE residuals are supported for 1-D scalar networks"));
    }
    let seed = Jet2::new(pde.a0, pde.a1, pde.a2);
    let (out, grad) = jet_param_gradient(spec, theta, x, &[1.0], &[seed])?;
    Ok((pde.residual(out[0], x[0]), grad))
}
