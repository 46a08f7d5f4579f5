use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::fmt_real;
use crate::numkit::RngStream;
use crate::problems::{CollocationSet, Objective, PinnModel, PinnObjective};

/// `n` equispaced points covering `[lo, hi]`, endpoints included.
pub fn equispaced_pool(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|j| lo + (hi - lo) * j as f64 / (n - 1) as f64).collect()
}

/// Resampling settings for residual-driven collocation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptiveSampling {
    /// Iterations between density updates.
    pub period: usize,
    /// Exponent applied to the error indicator.
    pub beta: f64,
    /// Candidate pool size.
    pub pool_size: usize,
}

impl Default for AdaptiveSampling {
    fn default() -> Self {
        Self { period: 500, beta: 1.0, pool_size: 512 }
    }
}

/// A discrete sampling density over a 1-D candidate pool.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingDensity {
    pub pool: Vec<f64>,
    /// Probability mass per pool point, summing to 1.
    pub probs: Vec<f64>,
    pub beta: f64,
    /// Refinement stage that produced this density.
    pub stage: usize,
    cumulative: Vec<f64>,
}

impl SamplingDensity {
    fn from_probs(pool: Vec<f64>, probs: Vec<f64>, beta: f64, stage: usize) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { pool, probs, beta, stage, cumulative }
    }

    pub fn uniform(pool: Vec<f64>) -> Result<Self> {
        if pool.is_empty() {
            return Err(invalid("empty candidate pool"));
        }
        let p = 1.0 / pool.len() as f64;
        let n = pool.len();
        Ok(Self::from_probs(pool, vec![p; n], 0.0, 0))
    }

    pub fn len(&self) -> usize {
        self.pool.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pool.is_empty()
    }

    /// Density value w.r.t. the uniform distribution on the pool: `M p_j`.
    pub fn relative_density(&self, j: usize) -> f64 {
        self.pool.len() as f64 * self.probs[j]
    }

    /// `n` pool indices drawn i.i.d. from the density.
    pub fn draw(&self, n: usize, rng: &mut RngStream) -> Vec<usize> {
        let total = *self.cumulative.last().expect("non-empty");
        (0..n)
            .map(|_| {
                let u = rng.next_f64() * total;
                let j = self.cumulative.partition_point(|c| *c <= u);
                j.min(self.pool.len() - 1)
            })
            .collect()
    }

    /// `x,p`
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("x,p\n");
        for (x, p) in self.pool.iter().zip(&self.probs) {
            let _ = writeln!(s, "{},{}", fmt_real(*x), fmt_real(*p));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// `p_j ∝ η_j^β` over the pool, the discrete form of `p(x) = η(x)^β / ∫η^β`.
pub fn update_density(pool: Vec<f64>, eta: &[f64], beta: f64, stage: usize) -> Result<SamplingDensity> {
    if pool.len() != eta.len() {
        return Err(dim_err(format!("pool has {} points, indicator has {}", pool.len(), eta.len())));
    }
    if !(beta > 0.0) {
        return Err(invalid("density exponent must be positive"));
    }
    if eta.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(invalid("error indicator must be finite and non-negative"));
    }
    let powered: Vec<f64> = eta.iter().map(|e| e.powf(beta)).collect();
    let total: f64 = powered.iter().sum();
    if !(total > 0.0) {
        return Err(invalid("error indicator vanishes on the whole pool"));
    }
    let probs = powered.iter().map(|w| w / total).collect();
    Ok(SamplingDensity::from_probs(pool, probs, beta, stage))
}

/// `(1/m) Σ_j w_j r_j²` over points drawn from a density, with
/// `w_j = 1/(M p_j)` the inverse density relative to uniform on the pool.
///
/// Its expectation over the draw equals the uniform pool-mean risk
/// `(1/M) Σ_pool r²`.
#[derive(Clone, Debug)]
pub struct ImportanceWeightedRisk<P> {
    inner: PinnObjective<P>,
    weights: Vec<f64>,
}

impl<P: PinnModel> ImportanceWeightedRisk<P> {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Unweighted residuals at the drawn points.
    pub fn residuals(&self, theta: &[f64]) -> Vec<f64> {
        self.inner.interior_residuals(theta)
    }
}

/// Build the importance-weighted interior risk of `obj`'s model and PDE at
/// the pool points `drawn` (indices into `density.pool`).
pub fn importance_weighted_risk<P: PinnModel + Clone>(
    obj: &PinnObjective<P>,
    density: &SamplingDensity,
    drawn: &[usize],
) -> Result<ImportanceWeightedRisk<P>> {
    if drawn.is_empty() {
        return Err(invalid("no points drawn"));
    }
    let mut weights = Vec::with_capacity(drawn.len());
    for &j in drawn {
        let p = *density.probs.get(j).ok_or_else(|| invalid(format!("pool index {j} out of range")))?;
        if !(p > 0.0) {
            return Err(invalid(format!("drawn point {j} has zero probability")));
        }
        weights.push(1.0 / density.relative_density(j));
    }
    let points = drawn.iter().map(|&j| vec![density.pool[j]]).collect();
    let inner = PinnObjective::new(obj.model().clone(), CollocationSet::interior_only(points), obj.pde().clone())?;
    Ok(ImportanceWeightedRisk { inner, weights })
}

impl<P: PinnModel> Objective for ImportanceWeightedRisk<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn num_samples(&self) -> usize {
        self.weights.len()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        let r = self.inner.term_error(i, theta).1;
        self.weights[i] * r * r
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        let r = self.inner.term_error(i, theta).1;
        let s = 2.0 * self.weights[i] * r;
        let mut g = self.inner.interior_residual_gradient(i, theta);
        g.iter_mut().for_each(|v| *v *= s);
        g
    }
}
