//! Generators shared by the property suites.
#![allow(dead_code)]

use optlab::admodel::MlpSpec;
use optlab::numkit::{Matrix, RngStream};
use optlab::problems::{Dataset, LeastSquaresObjective};

/// Row-major `rows × cols` matrix of standard normals.
pub fn gaussian(rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.std_normal()).collect()).unwrap()
}

/// `(B + Bᵀ)/2` for a Gaussian `B`.
pub fn symmetric(n: usize, seed: u64) -> Matrix {
    gaussian(n, n, &mut RngStream::new(seed)).symmetrized()
}

/// `BᵀB/n + shift·I`, symmetric positive definite for `shift > 0`.
pub fn spd(n: usize, shift: f64, seed: u64) -> Matrix {
    let mut a = gaussian(n, n, &mut RngStream::new(seed)).gram_cols();
    a.scale(1.0 / n as f64);
    a.add_diag(shift);
    a
}

pub fn gaussian_vec(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.std_normal()).collect()
}

/// A small tanh regression network on random data, with a Glorot start.
pub fn random_mlp(widths: &[usize], samples: usize, seed: u64) -> (LeastSquaresObjective<MlpSpec>, Vec<f64>) {
    let mut rng = RngStream::new(seed);
    let spec = MlpSpec::tanh(widths).unwrap();
    let (d_in, d_out) = (spec.d_in(), spec.d_out());
    let xs: Vec<Vec<f64>> = (0..samples).map(|_| gaussian_vec(d_in, &mut rng)).collect();
    let ys: Vec<Vec<f64>> = (0..samples).map(|_| gaussian_vec(d_out, &mut rng)).collect();
    let theta = spec.init_xavier(&mut rng);
    (LeastSquaresObjective::new(spec, Dataset::new(xs, ys).unwrap()).unwrap(), theta)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| f64::max(m, (x - y).abs()))
}
