use std::ops::Range;

use super::{Dataset, LeastSquares, Objective};
use crate::admodel::{self, MlpSpec};
use crate::error::{dim_err, Result};
use crate::numkit::{axpy, Matrix};

/// A parametric map `h_θ: R^{d_in} → R^{d_out}` with exact derivatives.
pub trait Model: Sync {
    fn n_params(&self) -> usize;
    fn d_in(&self) -> usize;
    fn d_out(&self) -> usize;

    fn eval(&self, theta: &[f64], x: &[f64]) -> Vec<f64>;

    /// `∇_θ (uᵀ h_θ(x))`
    fn vjp(&self, theta: &[f64], x: &[f64], u: &[f64]) -> Vec<f64>;

    /// `∇²_θ (uᵀ h_θ(x)) v`
    fn hvp(&self, theta: &[f64], x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64>;

    /// One row per output.
    fn jacobian(&self, theta: &[f64], x: &[f64]) -> Matrix {
        let mut jac = Matrix::zeros(self.d_out(), self.n_params());
        let mut e = vec![0.0; self.d_out()];
        for o in 0..self.d_out() {
            e.fill(0.0);
            e[o] = 1.0;
            let row = self.vjp(theta, x, &e);
            jac.row_mut(o).copy_from_slice(&row);
        }
        jac
    }

    /// Parameter blocks treated as units by filter normalization.
    fn param_blocks(&self) -> Vec<Range<usize>> {
        vec![0..self.n_params()]
    }
}

impl Model for MlpSpec {
    fn n_params(&self) -> usize {
        self.num_params()
    }

    fn d_in(&self) -> usize {
        MlpSpec::d_in(self)
    }

    fn d_out(&self) -> usize {
        MlpSpec::d_out(self)
    }

    fn eval(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        admodel::forward_generic(self, theta, x)
    }

    fn vjp(&self, theta: &[f64], x: &[f64], u: &[f64]) -> Vec<f64> {
        admodel::backprop_generic(self, theta, x, u).1
    }

    fn hvp(&self, theta: &[f64], x: &[f64], u: &[f64], v: &[f64]) -> Vec<f64> {
        admodel::param_hvp(self, theta, x, u, v).expect("dimensions checked by caller")
    }

    fn param_blocks(&self) -> Vec<Range<usize>> {
        let mut blocks = Vec::new();
        for l in 0..self.num_layers() {
            let o = self.weight_offset(l);
            blocks.push(o..o + self.layer_widths[l] * self.layer_widths[l + 1]);
        }
        for l in 0..self.num_layers() {
            let o = self.bias_offset(l);
            blocks.push(o..o + self.layer_widths[l + 1]);
        }
        blocks
    }
}

/// `h(x) = W x (+ b)`, parameters packed as row-major `W` then `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinearModel {
    pub d_in: usize,
    pub d_out: usize,
    pub bias: bool,
}

impl Model for LinearModel {
    fn n_params(&self) -> usize {
        self.d_in * self.d_out + if self.bias { self.d_out } else { 0 }
    }

    fn d_in(&self) -> usize {
        self.d_in
    }

    fn d_out(&self) -> usize {
        self.d_out
    }

    fn eval(&self, theta: &[f64], x: &[f64]) -> Vec<f64> {
        (0..self.d_out)
            .map(|o| {
                let row = &theta[o * self.d_in..(o + 1) * self.d_in];
                let b = if self.bias { theta[self.d_in * self.d_out + o] } else { 0.0 };
                b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    fn vjp(&self, _theta: &[f64], x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_params()];
        for o in 0..self.d_out {
            for j in 0..self.d_in {
                g[o * self.d_in + j] = u[o] * x[j];
            }
            if self.bias {
                g[self.d_in * self.d_out + o] = u[o];
            }
        }
        g
    }

    fn hvp(&self, _theta: &[f64], _x: &[f64], _u: &[f64], _v: &[f64]) -> Vec<f64> {
        vec![0.0; self.n_params()]
    }
}

/// `f(θ) = (1/2m) Σ_i ‖h_θ(x_i) − y_i‖²`.
#[derive(Clone, Debug)]
pub struct LeastSquaresObjective<M> {
    model: M,
    data: Dataset,
}

impl<M: Model> LeastSquaresObjective<M> {
    pub fn new(model: M, data: Dataset) -> Result<Self> {
        if model.d_in() != data.d_in() || model.d_out() != data.d_out() {
            return Err(dim_err(format!(
                "model maps R^{} → R^{}, data is R^{} → R^{}",
                model.d_in(),
                model.d_out(),
                data.d_in(),
                data.d_out()
            )));
        }
        Ok(Self { model, data })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    fn sample_residual(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let mut r = self.model.eval(theta, self.data.input(i));
        axpy(-1.0, self.data.target(i), &mut r);
        r
    }
}

impl<M: Model> Objective for LeastSquaresObjective<M> {
    fn dim(&self) -> usize {
        self.model.n_params()
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        0.5 * self.sample_residual(i, theta).iter().map(|r| r * r).sum::<f64>()
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let r = self.sample_residual(i, theta);
        self.model.vjp(theta, self.data.input(i), &r)
    }

    fn as_least_squares(&self) -> Option<&dyn LeastSquares> {
        Some(self)
    }
}

impl<M: Model> LeastSquares for LeastSquaresObjective<M> {
    fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.data.len())
            .flat_map(|i| self.sample_residual(i, theta))
            .collect()
    }

    fn jacobian(&self, theta: &[f64]) -> Matrix {
        let d_out = self.data.d_out();
        let mut jac = Matrix::zeros(self.data.len() * d_out, self.model.n_params());
        for i in 0..self.data.len() {
            let ji = self.model.jacobian(theta, self.data.input(i));
            for o in 0..d_out {
                jac.row_mut(i * d_out + o).copy_from_slice(ji.row(o));
            }
        }
        jac
    }
}
