use super::Objective;
use crate::error::{dim_err, Result};
use crate::numkit::{dot, Matrix};

/// `f(θ) = ½ θᵀAθ − bᵀθ` with symmetric `A`, as a one-term finite sum.
#[derive(Clone, Debug)]
pub struct QuadraticObjective {
    a: Matrix,
    b: Vec<f64>,
}

impl QuadraticObjective {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        a.check_symmetric()?;
        if a.rows() != b.len() {
            return Err(dim_err("A and b disagree in size"));
        }
        Ok(Self { a, b })
    }

    pub fn diagonal(lambdas: &[f64], b: Vec<f64>) -> Result<Self> {
        Self::new(Matrix::from_diag(lambdas), b)
    }

    pub fn hessian(&self) -> &Matrix {
        &self.a
    }

    pub fn linear_term(&self) -> &[f64] {
        &self.b
    }

    /// `A⁻¹ b`
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        self.a.solve(&self.b)
    }
}

impl Objective for QuadraticObjective {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn sample_value(&self, _i: usize, theta: &[f64]) -> f64 {
        0.5 * dot(theta, &self.a.matvec(theta)) - dot(&self.b, theta)
    }

    fn sample_gradient(&self, _i: usize, theta: &[f64]) -> Vec<f64> {
        let mut g = self.a.matvec(theta);
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi -= bi;
        }
        g
    }

    fn batch_hvp(&self, _idx: Option<&[usize]>, _theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        Some(self.a.matvec(v))
    }
}
