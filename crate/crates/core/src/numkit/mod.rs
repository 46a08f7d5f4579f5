//! Dense real linear algebra and seeded random streams.
//!
//! Vectors are plain `Vec<f64>` / `&[f64]`; the helpers in this module cover
//! the handful of BLAS-1 style operations the optimizers need. [`Matrix`] is a
//! small row-major dense matrix with LU and Cholesky solves,
//! [`sym_eigen`] is a cyclic Jacobi eigensolver and [`cg_solve`] a
//! conjugate-gradient solver driven by an operator closure.

mod cg;
mod eigen;
mod matrix;
mod rng;

pub use cg::{cg_solve, CgFlag, CgResult};
pub use eigen::{condition_number, condition_number_floored, sym_eigen, EigenDecomposition};
pub use matrix::Matrix;
pub use rng::RngStream;

/// Flat parameter vector shared by every optimizer.
pub type ParamVector = Vec<f64>;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
pub fn scale(a: f64, x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v *= a);
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scaled(a: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| a * v).collect()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

pub fn all_finite(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// `θ + α p`
pub fn step_to(theta: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    theta.iter().zip(p).map(|(t, d)| t + alpha * d).collect()
}
