//! Monte-Carlo checks of the SGD convergence theorems on synthetic problems
//! whose constants are known.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::fmt_real;
use crate::numkit::{norm_sq, sym_eigen, Matrix, RngStream};
use crate::problems::Objective;
use crate::secondorder::fd_hvp;

/// One assertion of a theorem check.
///
/// Passes when `lower ≤ empirical ≤ slack · upper` (missing sides are not checked).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub empirical: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub slack: f64,
    pub pass: bool,
    pub note: String,
}

impl Check {
    pub fn new(name: impl Into<String>, empirical: f64, lower: Option<f64>, upper: Option<f64>, slack: f64) -> Self {
        let lo_ok = lower.map_or(true, |l| empirical >= l);
        let hi_ok = upper.map_or(true, |u| empirical <= slack * u);
        Self {
            name: name.into(),
            empirical,
            lower,
            upper,
            slack,
            pass: lo_ok && hi_ok && empirical.is_finite(),
            note: String::new(),
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

/// Result of one theorem check: every assertion plus the curves behind it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TheoryReport {
    pub theorem: String,
    pub seeds: usize,
    pub checks: Vec<Check>,
    /// Set when the run was too short or too noisy to decide.
    pub inconclusive: bool,
    #[serde(skip)]
    pub columns: Vec<&'static str>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl TheoryReport {
    pub fn passed(&self) -> bool {
        !self.inconclusive && self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The curves behind the checks, one row per iteration or run length.
    pub fn to_csv_string(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_real(*v)).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }
}

/// `f(θ) = ½ θᵀ diag(λ) θ − bᵀθ` with gradient noise `ξ ~ N(0, (σ²/n) I)`,
/// so that `E‖ξ‖² = σ²`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SyntheticProblem {
    pub lambdas: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma2: f64,
    pub theta0: Vec<f64>,
}

impl SyntheticProblem {
    pub fn new(lambdas: Vec<f64>, b: Vec<f64>, sigma2: f64, theta0: Vec<f64>) -> Result<Self> {
        let n = lambdas.len();
        if n == 0 || b.len() != n || theta0.len() != n {
            return Err(dim_err("λ, b and θ₀ must share a non-zero length"));
        }
        if lambdas.iter().any(|l| !(*l > 0.0)) {
            return Err(invalid("curvatures must be positive"));
        }
        if !(sigma2 >= 0.0) {
            return Err(invalid("noise variance must be non-negative"));
        }
        Ok(Self { lambdas, b, sigma2, theta0 })
    }

    /// `diag(1, 10)`, `b = (1, 1)`, `θ₀ = θ* + (1, 1)`.
    pub fn strongly_convex(sigma2: f64) -> Self {
        let lambdas = vec![1.0, 10.0];
        let b = vec![1.0, 1.0];
        let theta0 = vec![2.0, 1.1];
        Self::new(lambdas, b, sigma2, theta0).expect("static fixture")
    }

    /// `λ_i = i/n` for `i = 1..=n`, minimizer 0, initial error
    /// `e_i = 1/√(n λ_i)` so that every curvature carries the same initial gap.
    ///
    /// With `μ = 1/n` the problem is nearly flat in many directions; at the
    /// run lengths used here it behaves like a merely convex problem.
    pub fn flat_spectrum(n: usize, sigma2: f64) -> Self {
        let lambdas: Vec<f64> = (1..=n).map(|i| i as f64 / n as f64).collect();
        let theta0 = lambdas.iter().map(|l| 1.0 / (n as f64 * l).sqrt()).collect();
        Self::new(lambdas, vec![0.0; n], sigma2, theta0).expect("static fixture")
    }

    pub fn dim(&self) -> usize {
        self.lambdas.len()
    }

    pub fn mu(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn l_max(&self) -> f64 {
        self.lambdas.iter().copied().fold(0.0, f64::max)
    }

    pub fn theta_star(&self) -> Vec<f64> {
        self.b.iter().zip(&self.lambdas).map(|(b, l)| b / l).collect()
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.lambdas)
            .zip(&self.b)
            .map(|((t, l), b)| 0.5 * l * t * t - b * t)
            .sum()
    }

    pub fn min_value(&self) -> f64 {
        self.value(&self.theta_star())
    }

    pub fn initial_distance_sq(&self) -> f64 {
        self.theta0.iter().zip(self.theta_star()).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    /// Per-coordinate noise variance.
    fn coord_var(&self) -> f64 {
        self.sigma2 / self.dim() as f64
    }

    /// Exact `E‖θ_k − θ*‖²` of constant-step SGD.
    pub fn expected_error(&self, alpha: f64, k: usize) -> f64 {
        let s2 = self.coord_var();
        let star = self.theta_star();
        (0..self.dim())
            .map(|i| {
                let q = (1.0 - alpha * self.lambdas[i]).powi(2);
                let qk = q.powi(k as i32);
                let e0 = self.theta0[i] - star[i];
                qk * e0 * e0 + alpha * alpha * s2 * (1.0 - qk) / (1.0 - q)
            })
            .sum()
    }

    /// `lim_k E‖θ_k − θ*‖² = Σ α s² / (λ (2 − αλ))`.
    pub fn stationary_error(&self, alpha: f64) -> f64 {
        let s2 = self.coord_var();
        self.lambdas.iter().map(|l| alpha * s2 / (l * (2.0 - alpha * l))).sum()
    }

    /// `f(θ* + e) − f(θ*)`.
    pub fn excess_value(&self, deviation: &[f64]) -> f64 {
        deviation.iter().zip(&self.lambdas).map(|(e, l)| 0.5 * l * e * e).sum()
    }

    /// Runs `steps` SGD steps from `θ₀`, calling `visit(k, θ_k − θ*)` for `k = 0..=steps`.
    ///
    /// The recursion is carried in deviation coordinates, where the gradient
    /// is `λ e + noise`. This is the same iteration as in `θ`, but the error
    /// keeps shrinking below the rounding level of `θ*` instead of stalling there.
    pub fn simulate<F: FnMut(usize, &[f64])>(&self, alpha: f64, steps: usize, seed: u64, mut visit: F) {
        let sd = self.coord_var().sqrt();
        let mut rng = RngStream::new(seed);
        let mut e: Vec<f64> = self.theta0.iter().zip(self.theta_star()).map(|(t, s)| t - s).collect();
        visit(0, &e);
        for k in 1..=steps {
            for i in 0..e.len() {
                let noise = if sd > 0.0 { sd * rng.std_normal() } else { 0.0 };
                e[i] -= alpha * (self.lambdas[i] * e[i] + noise);
            }
            visit(k, &e);
        }
    }
}

fn seed_list(seeds: usize, base: u64) -> Vec<u64> {
    (0..seeds as u64).map(|s| base.wrapping_add(s)).collect()
}

/// Mean over seeds of a per-seed vector, reduced in seed order.
fn seed_mean<F>(seeds: &[u64], run: F) -> Vec<f64>
where
    F: Fn(u64) -> Vec<f64> + Sync,
{
    let per_seed: Vec<Vec<f64>> = seeds.par_iter().map(|&s| run(s)).collect();
    let mut acc = vec![0.0; per_seed[0].len()];
    for v in &per_seed {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    let n = seeds.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

fn require_seeds(seeds: usize) -> Result<()> {
    if seeds == 0 {
        Err(invalid("at least one seed is required"))
    } else {
        Ok(())
    }
}

/// Mean-square distance to the minimizer under constant-step SGD against
/// `(1 − αμ)^k D₀ + 2ασ²/μ` at every `k ≤ steps`.
///
/// The noisy bound gets a 10% allowance for Monte-Carlo error; the noiseless
/// one gets none. With noise, the steady-state level is also compared with
/// its exact value `Σ α s² / (λ(2 − αλ))`.
pub fn verify_strongly_convex_bound(
    p: &SyntheticProblem,
    alpha: f64,
    steps: usize,
    seeds: usize,
    base_seed: u64,
) -> Result<TheoryReport> {
    require_seeds(seeds)?;
    if !(alpha > 0.0 && alpha < 1.0 / (2.0 * p.l_max())) {
        return Err(invalid(format!("step {alpha} outside (0, 1/(2L)) for L = {}", p.l_max())));
    }
    let ids = seed_list(seeds, base_seed);
    let mean_err = seed_mean(&ids, |s| {
        let mut out = Vec::with_capacity(steps + 1);
        p.simulate(alpha, steps, s, |_, e| {
            out.push(e.iter().map(|v| v * v).sum());
        });
        out
    });
    let mu = p.mu();
    let d0 = p.initial_distance_sq();
    let floor = 2.0 * alpha * p.sigma2 / mu;
    let bound: Vec<f64> = (0..=steps).map(|k| (1.0 - alpha * mu).powi(k as i32) * d0 + floor).collect();

    let slack = if p.sigma2 == 0.0 { 1.0 } else { 1.1 };
    let (worst_k, worst) = mean_err
        .iter()
        .zip(&bound)
        .enumerate()
        .map(|(k, (e, b))| (k, if *b > 0.0 { e / b } else if *e == 0.0 { 0.0 } else { f64::INFINITY }))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut checks = vec![Check::new("error / bound, worst k", worst, None, Some(1.0), slack)
        .with_note(format!("worst at k = {worst_k}"))];

    let mut inconclusive = false;
    if p.sigma2 > 0.0 {
        // Steady state once the transient bound is 0.1% of the noise level.
        let burn = steady_state_start(alpha * mu, d0, 1e-3 * p.stationary_error(alpha));
        if burn * 2 > steps {
            inconclusive = true;
        } else {
            let window = &mean_err[burn..];
            let empirical = window.iter().sum::<f64>() / window.len() as f64;
            let exact = p.stationary_error(alpha);
            checks.push(
                Check::new("steady state / exact stationary value", empirical / exact, Some(0.9), Some(1.1), 1.0)
                    .with_note(format!("averaged over k ≥ {burn}")),
            );
            checks.push(
                Check::new("steady state / theorem floor 2ασ²/μ", empirical / floor, None, Some(1.0), 1.0)
                    .with_note(format!("exact ratio {:.4}", exact / floor)),
            );
        }
    }
    let rows = (0..=steps).map(|k| vec![k as f64, mean_err[k], bound[k]]).collect();
    Ok(TheoryReport {
        theorem: "strongly_convex".into(),
        seeds,
        checks,
        inconclusive,
        columns: vec!["k", "mean_sq_error", "bound"],
        rows,
    })
}

/// First `k` with `(1 − c)^k d0 ≤ target`.
fn steady_state_start(c: f64, d0: f64, target: f64) -> usize {
    if d0 <= target {
        return 0;
    }
    ((target / d0).ln() / (1.0 - c).ln()).ceil() as usize
}

/// Steady-state mean error for each step size, and the ratio between each
/// step and its half (where both appear in `alphas`).
///
/// Each run lasts twice its burn-in and averages the second half. The burn-in
/// ends when the transient bound falls to 0.1% of the theorem's noise level,
/// or to `1e-22` without noise.
pub fn verify_noise_floor_scaling(
    p: &SyntheticProblem,
    alphas: &[f64],
    seeds: usize,
    base_seed: u64,
) -> Result<TheoryReport> {
    require_seeds(seeds)?;
    if alphas.is_empty() {
        return Err(invalid("no step sizes given"));
    }
    let l = p.l_max();
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0 / (2.0 * l))) {
        return Err(invalid(format!("step {a} outside (0, 1/(2L))")));
    }
    let mu = p.mu();
    let d0 = p.initial_distance_sq();
    let ids = seed_list(seeds, base_seed);
    let mut floors = Vec::with_capacity(alphas.len());
    let mut rows = Vec::new();
    let mut inconclusive = false;
    for &alpha in alphas {
        let target = if p.sigma2 > 0.0 { 1e-3 * p.stationary_error(alpha) } else { 1e-22 };
        let burn = steady_state_start(alpha * mu, d0, target).max(500);
        let per_seed: Vec<f64> = ids
            .par_iter()
            .map(|&s| {
                let mut acc = 0.0;
                p.simulate(alpha, 2 * burn, s, |k, e| {
                    if k > burn {
                        acc += e.iter().map(|v| v * v).sum::<f64>();
                    }
                });
                acc / burn as f64
            })
            .collect();
        let mean = per_seed.iter().sum::<f64>() / seeds as f64;
        if p.sigma2 > 0.0 && seeds > 1 {
            let var = per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (seeds - 1) as f64;
            if (var / seeds as f64).sqrt() > 0.1 * mean {
                inconclusive = true;
            }
        }
        rows.push(vec![alpha, mean, p.stationary_error(alpha), 2.0 * alpha * p.sigma2 / mu]);
        floors.push(mean);
    }

    let mut checks = Vec::new();
    if p.sigma2 == 0.0 {
        let worst = floors.iter().copied().fold(0.0, f64::max);
        checks.push(Check::new("largest noiseless floor", worst, None, Some(1e-20), 1.0));
    } else {
        for (i, &a) in alphas.iter().enumerate() {
            if let Some(j) = alphas.iter().position(|b| (b * 2.0 - a).abs() <= 1e-12 * a) {
                checks.push(Check::new(
                    format!("floor ratio α={a} / α={}", alphas[j]),
                    floors[i] / floors[j],
                    Some(1.4),
                    Some(2.6),
                    1.0,
                ));
            }
        }
        let mut order: Vec<usize> = (0..alphas.len()).collect();
        order.sort_by(|&x, &y| alphas[x].total_cmp(&alphas[y]));
        let monotone = order.windows(2).all(|w| floors[w[0]] < floors[w[1]]);
        checks.push(Check::new("floors increase with α", if monotone { 1.0 } else { 0.0 }, Some(1.0), None, 1.0));
    }
    Ok(TheoryReport {
        theorem: "noise_floor".into(),
        seeds,
        checks,
        inconclusive,
        columns: vec!["alpha", "floor", "exact_stationary", "theorem_floor"],
        rows,
    })
}

/// Averaged-iterate suboptimality with `α = α₀/√K` against
/// `D₀/(αK) + 2ασ²`, and the log-log slope over `K`.
pub fn verify_convex_rate(
    p: &SyntheticProblem,
    alpha0: f64,
    run_lengths: &[usize],
    seeds: usize,
    base_seed: u64,
) -> Result<TheoryReport> {
    require_seeds(seeds)?;
    if !(alpha0 > 0.0 && alpha0 <= 1.0 / (4.0 * p.l_max())) {
        return Err(invalid(format!("α₀ = {alpha0} exceeds 1/(4L)")));
    }
    if run_lengths.iter().any(|k| *k == 0) {
        return Err(invalid("run lengths must be positive"));
    }
    let ids = seed_list(seeds, base_seed);
    let d0 = p.initial_distance_sq();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for &kk in run_lengths {
        let alpha = alpha0 / (kk as f64).sqrt();
        let gap = seed_mean(&ids, |s| {
            let mut avg = vec![0.0; p.dim()];
            p.simulate(alpha, kk, s, |k, th| {
                if k >= 1 {
                    for (a, t) in avg.iter_mut().zip(th) {
                        *a += t;
                    }
                }
            });
            avg.iter_mut().for_each(|a| *a /= kk as f64);
            vec![p.excess_value(&avg)]
        })[0];
        let bound = d0 / (alpha * kk as f64) + 2.0 * alpha * p.sigma2;
        checks.push(Check::new(format!("gap / bound at K={kk}"), gap / bound, None, Some(1.0), 1.1));
        rows.push(vec![kk as f64, alpha, gap, bound]);
    }
    if run_lengths.len() >= 2 {
        let xs: Vec<f64> = rows.iter().map(|r| r[0].ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r[2].ln()).collect();
        checks.push(Check::new("log-log slope of gap vs K", fit_slope(&xs, &ys), Some(-0.65), Some(-0.35), 1.0));
    }
    Ok(TheoryReport {
        theorem: "convex".into(),
        seeds,
        checks,
        inconclusive: false,
        columns: vec!["K", "alpha", "mean_gap", "bound"],
        rows,
    })
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Separable nonconvex finite sum
/// `f_i(θ) = Σ_d [½(θ_d − a_{i,d})² + c cos(ω θ_d)]`.
///
/// Every term has Hessian `diag(1 − c ω² cos(ω θ_d))`, so with `c ω² > 1` the
/// problem is nonconvex and `L = 1 + c ω²`. Minima of `f` and of each `f_i`
/// reduce to one-dimensional problems and are computed to machine precision.
#[derive(Clone, Debug, PartialEq)]
pub struct RippledQuadratic {
    pub centers: Vec<Vec<f64>>,
    pub ripple: f64,
    pub freq: f64,
}

impl RippledQuadratic {
    /// `m` centers with i.i.d. `N(0.3, spread²)` coordinates in `n` dimensions.
    pub fn sampled(m: usize, n: usize, spread: f64, ripple: f64, freq: f64, seed: u64) -> Self {
        let mut rng = RngStream::new(seed);
        let centers = (0..m).map(|_| (0..n).map(|_| 0.3 + spread * rng.std_normal()).collect()).collect();
        Self { centers, ripple, freq }
    }

    /// The shipped fixture: 64 terms in 4 dimensions, `c = 0.5`, `ω = 2`.
    pub fn fixture() -> Self {
        Self::sampled(64, 4, 0.5, 0.5, 2.0, 17)
    }

    pub fn smoothness(&self) -> f64 {
        1.0 + self.ripple * self.freq * self.freq
    }

    fn mean_center(&self) -> Vec<f64> {
        let n = self.centers[0].len();
        let m = self.centers.len() as f64;
        (0..n).map(|d| self.centers.iter().map(|c| c[d]).sum::<f64>() / m).collect()
    }

    /// `min_t ½(t − a)² + c cos(ωt)`.
    fn min_1d(&self, a: f64) -> f64 {
        let (c, w) = (self.ripple, self.freq);
        let phi = |t: f64| 0.5 * (t - a) * (t - a) + c * (w * t).cos();
        // Global minimizer lies within |t − a| ≤ √(4c); scan, then polish with Newton.
        let r = (4.0 * c).sqrt() + 1e-3;
        let steps = 4000;
        let mut best = a;
        for j in 0..=steps {
            let t = a - r + 2.0 * r * j as f64 / steps as f64;
            if phi(t) < phi(best) {
                best = t;
            }
        }
        for _ in 0..50 {
            let d1 = best - a - c * w * (w * best).sin();
            let d2 = 1.0 - c * w * w * (w * best).cos();
            if d2 <= 0.0 {
                break;
            }
            best -= d1 / d2;
        }
        phi(best)
    }

    /// `inf f`, using that `f = ½‖θ − ā‖² + const + c Σ cos(ωθ_d)`.
    pub fn inf_value(&self) -> f64 {
        let abar = self.mean_center();
        let m = self.centers.len() as f64;
        let spread: f64 = abar
            .iter()
            .enumerate()
            .map(|(d, ab)| 0.5 * self.centers.iter().map(|c| (c[d] - ab).powi(2)).sum::<f64>() / m)
            .sum();
        abar.iter().map(|a| self.min_1d(*a)).sum::<f64>() + spread
    }

    /// `Δ_f = inf f − (1/m) Σ_i inf f_i`.
    pub fn delta_star(&self) -> f64 {
        let m = self.centers.len() as f64;
        let mean_inf: f64 = self
            .centers
            .iter()
            .map(|c| c.iter().map(|a| self.min_1d(*a)).sum::<f64>())
            .sum::<f64>()
            / m;
        self.inf_value() - mean_inf
    }
}

impl Objective for RippledQuadratic {
    fn dim(&self) -> usize {
        self.centers[0].len()
    }

    fn num_samples(&self) -> usize {
        self.centers.len()
    }

    fn sample_value(&self, i: usize, theta: &[f64]) -> f64 {
        theta
            .iter()
            .zip(&self.centers[i])
            .map(|(t, a)| 0.5 * (t - a) * (t - a) + self.ripple * (self.freq * t).cos())
            .sum()
    }

    fn sample_gradient(&self, i: usize, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.centers[i])
            .map(|(t, a)| t - a - self.ripple * self.freq * (self.freq * t).sin())
            .collect()
    }
}

/// Largest `|λ|` of the finite-difference Hessian of `obj` (restricted to
/// `idx` when given) at `θ`.
pub fn hessian_norm(obj: &dyn Objective, idx: Option<&[usize]>, theta: &[f64]) -> Result<f64> {
    let n = theta.len();
    let mut h = Matrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = fd_hvp(obj, idx, theta, &e);
        for i in 0..n {
            h[(i, j)] = col[i];
        }
    }
    let eig = sym_eigen(&h.symmetrized())?;
    Ok(eig.eigenvalues.iter().fold(0.0, |a: f64, l| a.max(l.abs())))
}

/// Smoothness constants estimated from Hessian norms at random points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothnessEstimate {
    /// Of the full objective.
    pub l_f: f64,
    /// Largest over individual terms.
    pub l_max: f64,
    /// Largest relative change between the first and second half of the samples.
    pub spread: f64,
}

/// Samples `points` points `θ₀ + N(0, radius²)`, evaluating the Hessian norm of
/// `f` and of `terms` randomly chosen `f_i` at each.
pub fn estimate_smoothness(
    obj: &dyn Objective,
    theta0: &[f64],
    radius: f64,
    points: usize,
    terms: usize,
    seed: u64,
) -> Result<SmoothnessEstimate> {
    if points < 2 {
        return Err(invalid("need at least two sample points"));
    }
    let mut rng = RngStream::new(seed);
    let mut lf = Vec::with_capacity(points);
    let mut lm = Vec::with_capacity(points);
    for _ in 0..points {
        let th: Vec<f64> = theta0.iter().map(|t| t + radius * rng.std_normal()).collect();
        lf.push(hessian_norm(obj, None, &th)?);
        let mut worst: f64 = 0.0;
        for _ in 0..terms {
            let i = rng.index(obj.num_samples());
            worst = worst.max(hessian_norm(obj, Some(&[i]), &th)?);
        }
        lm.push(worst);
    }
    let half = points / 2;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let spread = (max(&lf[..half]) - max(&lf[half..])).abs() / max(&lf);
    Ok(SmoothnessEstimate { l_f: max(&lf), l_max: max(&lm).max(max(&lf)), spread })
}

/// `min_k E‖∇f(θ_k)‖²` of single-sample SGD with `α = √(2/(L_f L_max K))`
/// against the theorem's bound, and its change when `K` is quadrupled.
pub fn verify_nonconvex_stationarity(
    p: &RippledQuadratic,
    theta0: &[f64],
    run_lengths: &[usize],
    seeds: usize,
    base_seed: u64,
) -> Result<TheoryReport> {
    require_seeds(seeds)?;
    if theta0.len() != p.dim() {
        return Err(dim_err("θ₀ length differs from the problem dimension"));
    }
    let est = estimate_smoothness(p, theta0, 1.0, 64, 4, base_seed ^ 0x5eed)?;
    let inconclusive = est.spread > 0.25;
    let f0_gap = p.value(theta0) - p.inf_value();
    let delta = p.delta_star();
    let ids = seed_list(seeds, base_seed);
    let m = p.num_samples();
    let mut checks = vec![
        Check::new("estimated L_f / exact L", est.l_f / p.smoothness(), Some(0.9), Some(1.0), 1.0 + 1e-6),
    ];
    let mut rows = Vec::new();
    let mut mins = Vec::new();
    for &kk in run_lengths {
        let alpha = (2.0 / (est.l_f * est.l_max * kk as f64)).sqrt();
        let curve = seed_mean(&ids, |s| {
            let mut rng = RngStream::new(s);
            let mut theta = theta0.to_vec();
            let mut out = Vec::with_capacity(kk);
            for _ in 0..kk {
                out.push(norm_sq(&p.gradient(&theta)));
                let g = p.sample_gradient(rng.index(m), &theta);
                for (t, gi) in theta.iter_mut().zip(&g) {
                    *t -= alpha * gi;
                }
            }
            out
        });
        let min = curve.iter().copied().fold(f64::INFINITY, f64::min);
        let bound = (2.0 * est.l_f * est.l_max).sqrt() * (2.0 * f0_gap + delta) / (kk as f64).sqrt();
        checks.push(Check::new(format!("min E‖∇f‖² / bound at K={kk}"), min / bound, None, Some(1.0), 1.0));
        rows.push(vec![kk as f64, alpha, min, bound]);
        mins.push((kk, min));
    }
    for &(k, a) in &mins {
        if let Some(&(_, b)) = mins.iter().find(|(k4, _)| *k4 == 4 * k) {
            checks.push(Check::new(format!("min ratio K={} / K={k}", 4 * k), b / a, Some(0.35), Some(0.7), 1.0));
        }
    }
    Ok(TheoryReport {
        theorem: "nonconvex".into(),
        seeds,
        checks,
        inconclusive,
        columns: vec!["K", "alpha", "min_mean_sq_grad", "bound"],
        rows,
    })
}

/// The four theorem checks with their shipped fixtures.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Theorem {
    StronglyConvex,
    NoiseFloor,
    Convex,
    Nonconvex,
}

impl Theorem {
    pub const ALL: [Theorem; 4] = [Theorem::StronglyConvex, Theorem::NoiseFloor, Theorem::Convex, Theorem::Nonconvex];

    /// `diag(1, 10)` with `σ² = 0.1` and `α = 0.04` for `K = 2000` steps;
    /// steps `{0.04, 0.02, 0.01}` for the floor; a 100-dimensional flat
    /// spectrum with `α₀ = 1/(4L)` over `K ∈ {10², 10³, 10⁴}`; the rippled
    /// quadratic over `K ∈ {1000, 4000}`.
    pub fn run(self, seeds: usize, base_seed: u64) -> Result<TheoryReport> {
        match self {
            Theorem::StronglyConvex => {
                verify_strongly_convex_bound(&SyntheticProblem::strongly_convex(0.1), 0.04, 2000, seeds, base_seed)
            }
            Theorem::NoiseFloor => verify_noise_floor_scaling(
                &SyntheticProblem::strongly_convex(0.1),
                &[0.04, 0.02, 0.01],
                seeds,
                base_seed,
            ),
            Theorem::Convex => verify_convex_rate(
                &SyntheticProblem::flat_spectrum(100, 0.1),
                0.25,
                &[100, 1000, 10000],
                seeds,
                base_seed,
            ),
            Theorem::Nonconvex => verify_nonconvex_stationarity(
                &RippledQuadratic::fixture(),
                &NONCONVEX_START,
                &[1000, 4000],
                seeds,
                base_seed,
            ),
        }
    }
}

/// Starting point of the shipped nonconvex check.
pub const NONCONVEX_START: [f64; 4] = [2.0, -1.5, 1.0, 2.5];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_bound_holds_without_slack() {
        let p = SyntheticProblem::strongly_convex(0.0);
        let r = verify_strongly_convex_bound(&p, 0.04, 500, 1, 0).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
        assert_eq!(r.checks[0].slack, 1.0);
    }

    #[test]
    fn starting_at_the_minimizer_stays_there() {
        let mut p = SyntheticProblem::strongly_convex(0.0);
        p.theta0 = p.theta_star();
        let r = verify_strongly_convex_bound(&p, 0.04, 100, 1, 0).unwrap();
        assert!(r.rows.iter().all(|row| row[1] == 0.0));
    }

    #[test]
    fn monte_carlo_mean_tracks_the_exact_error() {
        let p = SyntheticProblem::strongly_convex(0.1);
        let r = verify_strongly_convex_bound(&p, 0.04, 300, 400, 7).unwrap();
        for k in [0, 10, 50, 300] {
            let exact = p.expected_error(0.04, k);
            assert!((r.rows[k][1] - exact).abs() <= 0.15 * exact, "k={k}: {} vs {exact}", r.rows[k][1]);
        }
    }

    #[test]
    fn rejects_large_steps() {
        let p = SyntheticProblem::strongly_convex(0.1);
        assert!(verify_strongly_convex_bound(&p, 0.05, 10, 1, 0).is_err());
        assert!(verify_convex_rate(&p, 0.03, &[10], 1, 0).is_err());
    }

    #[test]
    fn noiseless_floors_vanish() {
        let p = SyntheticProblem::strongly_convex(0.0);
        let r = verify_noise_floor_scaling(&p, &[0.04, 0.02], 1, 0).unwrap();
        assert!(r.passed(), "{:?}", r.checks);
    }

    #[test]
    fn single_step_average_is_the_first_iterate() {
        let p = SyntheticProblem::strongly_convex(0.0);
        let r = verify_convex_rate(&p, 0.025, &[1], 1, 0).unwrap();
        let theta1: Vec<f64> = p.theta0.iter().zip(&p.lambdas).zip(&p.b).map(|((t, l), b)| t - 0.025 * (l * t - b)).collect();
        assert!((r.rows[0][2] - (p.value(&theta1) - p.min_value())).abs() <= 1e-15);
        assert!(r.passed());
    }

    #[test]
    fn slope_of_a_power_law() {
        let xs: Vec<f64> = [1.0f64, 10.0, 100.0].iter().map(|v| v.ln()).collect();
        let ys: Vec<f64> = [1.0f64, 10.0, 100.0].iter().map(|v| (3.0 * v.powf(-0.5)).ln()).collect();
        assert!((fit_slope(&xs, &ys) + 0.5).abs() <= 1e-12);
    }

    #[test]
    fn rippled_terms_match_finite_differences() {
        let p = RippledQuadratic::sampled(5, 3, 0.4, 0.5, 2.0, 1);
        let r = crate::admodel::gradcheck(&p, &[0.2, -0.7, 1.3]);
        assert!(r.passes(1e-6));
    }

    #[test]
    fn rippled_minimum_beats_a_dense_scan() {
        let p = RippledQuadratic::sampled(3, 1, 0.4, 0.5, 2.0, 2);
        let inf = p.inf_value();
        let scan = (0..20001).map(|j| -5.0 + j as f64 * 1e-3).map(|t| p.value(&[t])).fold(f64::INFINITY, f64::min);
        assert!(inf <= scan + 1e-12 && scan - inf <= 1e-6);
        assert!(p.delta_star() >= 0.0);
    }

    #[test]
    fn hessian_norm_of_the_ripple() {
        let p = RippledQuadratic::sampled(2, 2, 0.4, 0.5, 2.0, 3);
        let t = std::f64::consts::FRAC_PI_2;
        // cos(2t) = −1 in both coordinates: curvature 1 + cω² = 3.
        let h = hessian_norm(&p, None, &[t, t]).unwrap();
        assert!((h - 3.0).abs() <= 1e-6);
    }

    #[test]
    fn quadratic_case_of_the_nonconvex_check() {
        // Without ripple the fixture is a strongly convex quadratic; the
        // squared gradient equals the squared distance to the minimizer.
        let p = RippledQuadratic::sampled(16, 2, 0.3, 0.0, 2.0, 4);
        let r = verify_nonconvex_stationarity(&p, &[2.0, -1.0], &[200], 8, 0).unwrap();
        assert!(r.checks.iter().all(|c| c.pass), "{:?}", r.checks);
    }
}
