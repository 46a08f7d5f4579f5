//! Finite-sum objectives and the fixtures used throughout the crate.
//!
//! Every objective has the form `f(θ) = (1/m) Σ_i f_i(θ)` and exposes the
//! per-sample terms, so stochastic optimizers can draw unbiased gradient
//! estimates. Least-squares objectives additionally expose the residual
//! vector and its Jacobian; their value is `(1/2m)‖r(θ)‖²`.

mod dataset;
mod fixtures;
mod least_squares;
mod logistic;
mod penalty;
mod pinn;
mod quadratic;

pub use dataset::Dataset;
pub use fixtures::{
    logistic_fixture, mlp_pinn_fixture, poisson_forcing, poisson_surrogate_fixture,
    regression_2d_fixture, regression_2d_target, spectral_bias_fixture, spectral_bias_grid,
    spectral_bias_target, two_gaussians, FixtureSet, NamedFixture, CLASS_MEAN, CLASS_SD,
    LOGISTIC_SAMPLES, PINN_WIDTHS, REGRESSION_2D_GRID, REGRESSION_2D_WIDTHS,
    SPECTRAL_BIAS_POINTS, SPECTRAL_BIAS_WIDTHS,
};
pub use least_squares::{LeastSquaresObjective, LinearModel, Model};
pub use logistic::LogisticObjective;
pub use penalty::{GradientPenalty, L2Penalty, Penalized, Penalty};
pub use pinn::{CollocationSet, PdeForm, PinnModel, PinnObjective, PoissonSurrogate, ScalarFn, TermGroup};
pub use quadratic::QuadraticObjective;

use rayon::prelude::*;

use crate::numkit::{axpy, Matrix};

/// Samples per chunk in the deterministic reductions below.
const CHUNK: usize = 32;
/// Work (samples × dimension) above which reductions run on the thread pool.
const PAR_WORK: usize = 1 << 16;

/// Mean of `f(i)` over `idx`, summed in fixed-size chunks so the rounding is
/// the same whether or not the chunks run in parallel.
pub(crate) fn chunked_mean_vec<F>(idx: &[usize], dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync,
{
    let chunk_sum = |chunk: &[usize]| {
        let mut acc = vec![0.0; dim];
        for &i in chunk {
            axpy(1.0, &f(i), &mut acc);
        }
        acc
    };
    let partials: Vec<Vec<f64>> = if idx.len() * dim.max(1) >= PAR_WORK && idx.len() > CHUNK {
        idx.par_chunks(CHUNK).map(chunk_sum).collect()
    } else {
        idx.chunks(CHUNK).map(chunk_sum).collect()
    };
    let mut total = vec![0.0; dim];
    for p in &partials {
        axpy(1.0, p, &mut total);
    }
    let inv = 1.0 / idx.len() as f64;
    total.iter_mut().for_each(|v| *v *= inv);
    total
}

pub(crate) fn chunked_mean<F>(idx: &[usize], work_per_item: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let chunk_sum = |chunk: &[usize]| chunk.iter().map(|&i| f(i)).sum::<f64>();
    let partials: Vec<f64> = if idx.len() * work_per_item.max(1) >= PAR_WORK && idx.len() > CHUNK {
        idx.par_chunks(CHUNK).map(chunk_sum).collect()
    } else {
        idx.chunks(CHUNK).map(chunk_sum).collect()
    };
    partials.iter().sum::<f64>() / idx.len() as f64
}

/// `f(θ) = (1/m) Σ f_i(θ)` with per-sample access.
///
/// Implementations are pure: evaluation at distinct `θ` from several threads
/// is allowed. Parameter vectors are assumed to have length [`dim`](Self::dim);
/// optimizers validate this once before iterating.
pub trait Objective: Sync {
    fn dim(&self) -> usize;

    fn num_samples(&self) -> usize;

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64;

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64>;

    fn value(&self, theta: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..self.num_samples()).collect();
        self.batch_value(&idx, theta)
    }

    fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let idx: Vec<usize> = (0..self.num_samples()).collect();
        self.batch_gradient(&idx, theta)
    }

    fn value_and_gradient(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        (self.value(theta), self.gradient(theta))
    }

    /// Mean of the sample values over `idx` (repeats allowed).
    fn batch_value(&self, idx: &[usize], theta: &[f64]) -> f64 {
        chunked_mean(idx, self.dim(), |i| self.sample_value(i, theta))
    }

    /// Mean of the sample gradients over `idx` (repeats allowed).
    fn batch_gradient(&self, idx: &[usize], theta: &[f64]) -> Vec<f64> {
        chunked_mean_vec(idx, self.dim(), |i| self.sample_gradient(i, theta))
    }

    /// Exact Hessian-vector product of the mean over `idx` (all samples when
    /// `None`), if the objective knows one.
    fn batch_hvp(&self, _idx: Option<&[usize]>, _theta: &[f64], _v: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn as_least_squares(&self) -> Option<&dyn LeastSquares> {
        None
    }
}

/// `f(θ) = (1/2m)‖r(θ)‖²` with `m` = [`Objective::num_samples`].
pub trait LeastSquares: Objective {
    fn residuals(&self, theta: &[f64]) -> Vec<f64>;

    /// One row per residual: `∂r_i/∂θ`.
    fn jacobian(&self, theta: &[f64]) -> Matrix;
}
