use super::{Model, Objective};
use crate::error::{dim_err, invalid, Result};
use crate::numkit::axpy;

/// Additive term `P(θ) = (1/m) Σ_i P_i(θ)` aligned with a base objective's samples.
pub trait Penalty: Sync {
    fn sample_value(&self, i: usize, theta: &[f64]) -> f64;
    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64>;
    /// Number of samples the penalty is defined on, if it is per-sample.
    fn samples(&self) -> Option<usize> {
        None
    }
}

/// `γ ‖θ‖²`, identical for every sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct L2Penalty {
    pub gamma: f64,
}

impl L2Penalty {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(invalid("penalty weight must be non-negative"));
        }
        Ok(Self { gamma })
    }
}

impl Penalty for L2Penalty {
    fn sample_value(&self, _i: usize, theta: &[f64]) -> f64 {
        self.gamma * theta.iter().map(|t| t * t).sum::<f64>()
    }

    fn sample_gradient(&self, _i: usize, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| 2.0 * self.gamma * t).collect()
    }
}

/// `γ (1/m) Σ_i ‖∇_θ h_θ(x_i)‖_F²` over the dataset inputs.
///
/// Its gradient `2γ Σ_o ∇²_θ h_o(x_i) ∇_θ h_o(x_i)` uses the model's exact
/// Hessian-vector products.
#[derive(Clone, Debug)]
pub struct GradientPenalty<M> {
    model: M,
    inputs: Vec<Vec<f64>>,
    gamma: f64,
}

impl<M: Model> GradientPenalty<M> {
    pub fn new(model: M, inputs: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0) {
            return Err(invalid("penalty weight must be non-negative"));
        }
        if inputs.iter().any(|x| x.len() != model.d_in()) {
            return Err(dim_err("penalty inputs do not match the model input width"));
        }
        Ok(Self { model, inputs, gamma })
    }
}

impl<M: Model> Penalty for GradientPenalty<M> {
    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        let j = self.model.jacobian(theta, &self.inputs[i]);
        self.gamma * j.as_slice().iter().map(|v| v * v).sum::<f64>()
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let x = &self.inputs[i];
        let d_out = self.model.d_out();
        let mut g = vec![0.0; self.model.n_params()];
        if self.gamma == 0.0 {
            return g;
        }
        let mut e = vec![0.0; d_out];
        for o in 0..d_out {
            e.fill(0.0);
            e[o] = 1.0;
            let grad_o = self.model.vjp(theta, x, &e);
            let hv = self.model.hvp(theta, x, &e, &grad_o);
            axpy(2.0 * self.gamma, &hv, &mut g);
        }
        g
    }

    fn samples(&self) -> Option<usize> {
        Some(self.inputs.len())
    }
}

/// Base objective plus a penalty, sample by sample.
#[derive(Clone, Debug)]
pub struct Penalized<O, P> {
    base: O,
    penalty: P,
}

impl<O: Objective, P: Penalty> Penalized<O, P> {
    pub fn new(base: O, penalty: P) -> Result<Self> {
        if let Some(n) = penalty.samples() {
            if n != base.num_samples() {
                return Err(dim_err(format!(
                    "penalty has {n} samples, objective has {}",
                    base.num_samples()
                )));
            }
        }
        Ok(Self { base, penalty })
    }

    pub fn base(&self) -> &O {
        &self.base
    }
}

impl<O: Objective, P: Penalty> Objective for Penalized<O, P> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn num_samples(&self) -> usize {
        self.base.num_samples()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        self.base.sample_value(i, theta) + self.penalty.sample_value(i, theta)
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let mut g = self.base.sample_gradient(i, theta);
        axpy(1.0, &self.penalty.sample_gradient(i, theta), &mut g);
        g
    }
}
