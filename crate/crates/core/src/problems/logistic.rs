use super::{chunked_mean_vec, Dataset, Objective};
use crate::admodel::sigmoid;
use crate::error::{invalid, Result};
use crate::numkit::dot;

/// Binary cross-entropy of a linear classifier, `f_i = −y log ρ(xᵀθ) − (1−y) log(1−ρ(xᵀθ))`.
#[derive(Clone, Debug)]
pub struct LogisticObjective {
    data: Dataset,
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticObjective {
    pub fn new(data: Dataset) -> Result<Self> {
        if data.d_out() != 1 {
            return Err(invalid("logistic targets must be scalars"));
        }
        if data.targets().iter().any(|y| y[0] != 0.0 && y[0] != 1.0) {
            return Err(invalid("logistic targets must be 0 or 1"));
        }
        Ok(Self { data })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Objective for LogisticObjective {
    fn dim(&self) -> usize {
        self.data.d_in()
    }

    fn num_samples(&self) -> usize {
        self.data.len()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        let z = dot(self.data.input(i), theta);
        // −y log ρ(z) − (1−y) log(1−ρ(z)) = softplus(z) − y z
        softplus(z) - self.data.target(i)[0] * z
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let x = self.data.input(i);
        let r = sigmoid(dot(x, theta)) - self.data.target(i)[0];
        x.iter().map(|v| r * v).collect()
    }

    fn batch_hvp(&self, idx: Option<&[usize]>, theta: &[f64], v: &[f64]) -> Option<Vec<f64>> {
        let all: Vec<usize>;
        let idx = match idx {
            Some(s) => s,
            None => {
                all = (0..self.num_samples()).collect();
                &all
            }
        };
        Some(chunked_mean_vec(idx, self.dim(), |i| {
            let x = self.data.input(i);
            let s = sigmoid(dot(x, theta));
            let w = s * (1.0 - s) * dot(x, v);
            x.iter().map(|xi| w * xi).collect()
        }))
    }
}
