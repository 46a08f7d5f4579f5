//! First-order and adaptive optimizers with step-size and batch-size schedules.
//!
//! Each `*_step` function advances an [`OptState`] by one iteration using a
//! gradient estimate drawn from a [`Batch`]. [`run`] drives a [`Method`] under
//! schedules and records one [`TraceRecord`] per iteration.
//!
//! The momentum update follows `θ+ = θ − αg + β(θ − θ_prev)`. A common
//! alternative scales the gradient by `(1 − β)`; that is equivalent to a
//! rescaled `α` and is not offered separately.

mod trace;

pub use trace::{fmt_real, Phase, RunStatus, Trace, TraceColumns, TraceRecord};

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::numkit::{all_finite, axpy, norm, RngStream};
use crate::problems::Objective;

/// Objective values above this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Step size as a function of the iteration counter `k` (from 0).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepSchedule {
    Constant { alpha: f64 },
    /// `α₀ / (1 + τk)^pw`
    PolynomialDecay { alpha0: f64, tau: f64, power: f64 },
    /// `α₀ / √(k + 1)`
    InverseSqrt { alpha0: f64 },
}

impl StepSchedule {
    pub fn alpha(&self, k: usize) -> f64 {
        let k = k as f64;
        match *self {
            StepSchedule::Constant { alpha } => alpha,
            StepSchedule::PolynomialDecay { alpha0, tau, power } => {
                alpha0 / (1.0 + tau * k).powf(power)
            }
            StepSchedule::InverseSqrt { alpha0 } => alpha0 / (k + 1.0).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
            StepSchedule::PolynomialDecay { alpha0, tau, power } => {
                alpha0 > 0.0 && alpha0.is_finite() && tau >= 0.0 && power >= 0.0
            }
            StepSchedule::InverseSqrt { alpha0 } => alpha0 > 0.0 && alpha0.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("step schedule {self:?} must give positive finite steps")))
        }
    }
}

/// Mini-batch size as a function of `k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchSchedule {
    /// Every sample, every iteration.
    Full,
    Fixed { size: usize },
    /// `b₀ + (k/T)(b_T − b₀)`, rounded down, held at `b_T` after `T`.
    LinearGrowth { start: usize, end: usize, steps: usize },
}

impl BatchSchedule {
    /// Batch size at iteration `k`; `None` means the full gradient.
    /// Sizes of at least `m` are also reported as `None`.
    pub fn size(&self, k: usize, m: usize) -> Option<usize> {
        let b = match *self {
            BatchSchedule::Full => return None,
            BatchSchedule::Fixed { size } => size,
            BatchSchedule::LinearGrowth { start, end, steps } => {
                if steps == 0 || k >= steps {
                    end
                } else {
                    let frac = k as f64 / steps as f64;
                    (start as f64 + frac * (end as f64 - start as f64)).floor() as usize
                }
            }
        };
        if b >= m {
            None
        } else {
            Some(b.max(1))
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            BatchSchedule::Full => Ok(()),
            BatchSchedule::Fixed { size } if size >= 1 => Ok(()),
            BatchSchedule::LinearGrowth { start, end, .. } if start >= 1 && end >= start => Ok(()),
            _ => Err(invalid(format!("batch schedule {self:?} must be non-empty and non-decreasing"))),
        }
    }
}

/// Optimizer family and its hyper-parameters (the step size comes from the schedule).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Plain (stochastic) gradient steps; GD under a full batch.
    Sgd,
    HeavyBall { beta: f64 },
    Nag { beta: f64 },
    AdaGrad { eps: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Method {
    pub const fn adam() -> Self {
        Method::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub const fn adagrad() -> Self {
        Method::AdaGrad { eps: 1e-8 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sgd => "sgd",
            Method::HeavyBall { .. } => "heavy_ball",
            Method::Nag { .. } => "nag",
            Method::AdaGrad { .. } => "adagrad",
            Method::Adam { .. } => "adam",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        let ok = match *self {
            Method::Sgd => true,
            Method::HeavyBall { beta } | Method::Nag { beta } => unit(beta),
            Method::AdaGrad { eps } => eps > 0.0,
            Method::Adam { beta1, beta2, eps } => unit(beta1) && unit(beta2) && eps > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("bad hyper-parameters for {self:?}")))
        }
    }
}

/// How mini-batch indices are drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// I.i.d. uniform indices.
    #[default]
    WithReplacement,
    /// Walk a fresh random permutation each epoch.
    ShuffledEpochs,
}

/// Which samples a gradient estimate averages over.
#[derive(Clone, Copy, Debug)]
pub enum Batch<'a> {
    Full,
    Indices(&'a [usize]),
}

impl Batch<'_> {
    fn len(&self, m: usize) -> usize {
        match self {
            Batch::Full => m,
            Batch::Indices(idx) => idx.len(),
        }
    }
}

/// Iterate plus every method buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct OptState {
    pub theta: Vec<f64>,
    /// Previous iterate; equals `theta` before the first step.
    pub prev_theta: Vec<f64>,
    /// Steps taken so far.
    pub k: usize,
    /// AdaGrad sum of squared gradients.
    pub accum: Vec<f64>,
    /// Adam first moment.
    pub m: Vec<f64>,
    /// Adam second moment.
    pub v: Vec<f64>,
    pub rng: RngStream,
    pub samples_seen: u64,
    perm: Vec<usize>,
    perm_pos: usize,
}

impl OptState {
    pub fn new(theta: Vec<f64>, seed: u64) -> Self {
        let n = theta.len();
        Self {
            prev_theta: theta.clone(),
            theta,
            k: 0,
            accum: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            rng: RngStream::new(seed),
            samples_seen: 0,
            perm: Vec::new(),
            perm_pos: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Bias-corrected Adam second moment `v / (1 − β₂ᵏ)`; zeros before any step.
    pub fn adam_v_hat(&self, beta2: f64) -> Vec<f64> {
        if self.k == 0 {
            return vec![0.0; self.dim()];
        }
        let c = 1.0 - beta2.powi(self.k as i32);
        self.v.iter().map(|v| v / c).collect()
    }

    /// Draw `size` indices from `0..m` and charge them to the epoch counter.
    pub fn draw_batch(&mut self, m: usize, size: usize, sampling: Sampling) -> Vec<usize> {
        match sampling {
            Sampling::WithReplacement => (0..size).map(|_| self.rng.index(m)).collect(),
            Sampling::ShuffledEpochs => {
                let mut out = Vec::with_capacity(size);
                while out.len() < size {
                    if self.perm.len() != m || self.perm_pos == m {
                        self.perm = (0..m).collect();
                        self.rng.shuffle(&mut self.perm);
                        self.perm_pos = 0;
                    }
                    out.push(self.perm[self.perm_pos]);
                    self.perm_pos += 1;
                }
                out
            }
        }
    }

    fn advance(&mut self, next: Vec<f64>, batch_len: usize) {
        self.prev_theta = std::mem::replace(&mut self.theta, next);
        self.k += 1;
        self.samples_seen += batch_len as u64;
    }
}

fn check(obj: &dyn Objective, state: &OptState, batch: Batch<'_>) -> Result<()> {
    if state.dim() != obj.dim() {
        return Err(dim_err(format!("θ has length {}, objective expects {}", state.dim(), obj.dim())));
    }
    if let Batch::Indices(idx) = batch {
        if idx.is_empty() {
            return Err(invalid("empty mini-batch"));
        }
        let m = obj.num_samples();
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(invalid(format!("batch index {bad} out of range for {m} samples")));
        }
    }
    Ok(())
}

fn estimate(obj: &dyn Objective, theta: &[f64], batch: Batch<'_>) -> Result<Vec<f64>> {
    let g = match batch {
        Batch::Full => obj.gradient(theta),
        Batch::Indices(idx) => obj.batch_gradient(idx, theta),
    };
    if all_finite(&g) {
        Ok(g)
    } else {
        Err(Error::NonFinite(format!("gradient estimate at iteration with ‖θ‖ = {:.3e}", norm(theta))))
    }
}

/// `θ+ = θ − α∇f(θ)`.
pub fn gd_step(obj: &dyn Objective, state: &mut OptState, alpha: f64) -> Result<()> {
    minibatch_step_with(obj, state, alpha, Batch::Full)
}

/// `θ+ = θ − (α/|I|) Σ_{i∈I} ∇f_i(θ)`.
pub fn minibatch_step(obj: &dyn Objective, state: &mut OptState, batch: &[usize], alpha: f64) -> Result<()> {
    minibatch_step_with(obj, state, alpha, Batch::Indices(batch))
}

/// One SGD step: draw `batch_size` indices with replacement from the state's
/// stream, step with `schedule.alpha(k)`.
pub fn sgd_step(
    obj: &dyn Objective,
    state: &mut OptState,
    schedule: &StepSchedule,
    batch_size: usize,
) -> Result<()> {
    let alpha = schedule.alpha(state.k);
    let idx = state.draw_batch(obj.num_samples(), batch_size, Sampling::WithReplacement);
    minibatch_step(obj, state, &idx, alpha)
}

fn minibatch_step_with(obj: &dyn Objective, state: &mut OptState, alpha: f64, batch: Batch<'_>) -> Result<()> {
    check(obj, state, batch)?;
    let g = estimate(obj, &state.theta, batch)?;
    apply_gradient_step(state, alpha, &g, batch.len(obj.num_samples()));
    Ok(())
}

fn apply_gradient_step(state: &mut OptState, alpha: f64, g: &[f64], batch_len: usize) {
    let mut next = state.theta.clone();
    axpy(-alpha, g, &mut next);
    state.advance(next, batch_len);
}

/// `θ+ = θ − αg + β(θ − θ_prev)`.
pub fn heavy_ball_step(
    obj: &dyn Objective,
    state: &mut OptState,
    alpha: f64,
    beta: f64,
    batch: Batch<'_>,
) -> Result<()> {
    check(obj, state, batch)?;
    let g = estimate(obj, &state.theta, batch)?;
    heavy_ball_apply(state, alpha, beta, &g, batch.len(obj.num_samples()));
    Ok(())
}

fn heavy_ball_apply(state: &mut OptState, alpha: f64, beta: f64, g: &[f64], batch_len: usize) {
    let next: Vec<f64> = (0..state.dim())
        .map(|i| state.theta[i] - alpha * g[i] + beta * (state.theta[i] - state.prev_theta[i]))
        .collect();
    state.advance(next, batch_len);
}

/// Heavy ball with the gradient taken at the look-ahead point `θ + β(θ − θ_prev)`.
pub fn nag_step(
    obj: &dyn Objective,
    state: &mut OptState,
    alpha: f64,
    beta: f64,
    batch: Batch<'_>,
) -> Result<()> {
    check(obj, state, batch)?;
    let look: Vec<f64> = (0..state.dim())
        .map(|i| state.theta[i] + beta * (state.theta[i] - state.prev_theta[i]))
        .collect();
    let g = estimate(obj, &look, batch)?;
    heavy_ball_apply(state, alpha, beta, &g, batch.len(obj.num_samples()));
    Ok(())
}

/// `G += g²`, `θ −= α g / √(G + ε)` per coordinate.
pub fn adagrad_step(
    obj: &dyn Objective,
    state: &mut OptState,
    alpha: f64,
    eps: f64,
    batch: Batch<'_>,
) -> Result<()> {
    check(obj, state, batch)?;
    let g = estimate(obj, &state.theta, batch)?;
    adagrad_apply(state, alpha, eps, &g, batch.len(obj.num_samples()));
    Ok(())
}

fn adagrad_apply(state: &mut OptState, alpha: f64, eps: f64, g: &[f64], batch_len: usize) {
    let mut next = state.theta.clone();
    for i in 0..next.len() {
        state.accum[i] += g[i] * g[i];
        next[i] -= alpha * g[i] / (state.accum[i] + eps).sqrt();
    }
    state.advance(next, batch_len);
}

/// Adam with bias correction; the correction exponent counts steps from 1.
pub fn adam_step(
    obj: &dyn Objective,
    state: &mut OptState,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    batch: Batch<'_>,
) -> Result<()> {
    check(obj, state, batch)?;
    let g = estimate(obj, &state.theta, batch)?;
    adam_apply(state, alpha, beta1, beta2, eps, &g, batch.len(obj.num_samples()));
    Ok(())
}

fn adam_apply(state: &mut OptState, alpha: f64, beta1: f64, beta2: f64, eps: f64, g: &[f64], batch_len: usize) {
    let t = (state.k + 1) as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let mut next = state.theta.clone();
    for i in 0..next.len() {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        next[i] -= alpha * m_hat / (v_hat.sqrt() + eps);
    }
    state.advance(next, batch_len);
}

/// Apply one step of `method` from a gradient `g` already computed at `θ`.
/// NAG is not supported here since its gradient lives at the look-ahead point.
pub fn step_with_gradient(method: &Method, state: &mut OptState, alpha: f64, g: &[f64], batch_len: usize) -> Result<()> {
    if g.len() != state.dim() {
        return Err(dim_err("gradient length differs from θ"));
    }
    match *method {
        Method::Sgd => apply_gradient_step(state, alpha, g, batch_len),
        Method::HeavyBall { beta } => heavy_ball_apply(state, alpha, beta, g, batch_len),
        Method::AdaGrad { eps } => adagrad_apply(state, alpha, eps, g, batch_len),
        Method::Adam { beta1, beta2, eps } => adam_apply(state, alpha, beta1, beta2, eps, g, batch_len),
        Method::Nag { .. } => return Err(invalid("NAG needs the look-ahead gradient")),
    }
    Ok(())
}

/// One step of `method` at step size `alpha` on `batch`.
pub fn method_step(obj: &dyn Objective, method: &Method, state: &mut OptState, alpha: f64, batch: Batch<'_>) -> Result<()> {
    match *method {
        Method::Nag { beta } => nag_step(obj, state, alpha, beta, batch),
        _ => {
            check(obj, state, batch)?;
            let g = estimate(obj, &state.theta, batch)?;
            step_with_gradient(method, state, alpha, &g, batch.len(obj.num_samples()))
        }
    }
}

/// Settings of a first-order run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub step: StepSchedule,
    pub batch: BatchSchedule,
    pub max_iter: usize,
    /// Stop once the full gradient norm is at or below this; 0 disables.
    #[serde(default)]
    pub grad_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sampling: Sampling,
    /// Record every this many iterations (the first and last are always recorded).
    #[serde(default = "one")]
    pub record_every: usize,
    /// Fill `wall_ms`; off by default so traces are byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn new(method: Method, step: StepSchedule, batch: BatchSchedule, max_iter: usize) -> Self {
        Self {
            method,
            step,
            batch,
            max_iter,
            grad_tol: 0.0,
            seed: 0,
            sampling: Sampling::WithReplacement,
            record_every: 1,
            record_wall_time: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        self.step.validate()?;
        self.batch.validate()?;
        if self.record_every == 0 {
            return Err(invalid("record_every must be at least 1"));
        }
        Ok(())
    }
}

/// Run `cfg.method` from `theta0`; see [`run_observed`].
pub fn run(obj: &dyn Objective, theta0: &[f64], cfg: &RunConfig) -> Result<Trace> {
    run_observed(obj, theta0, cfg, &mut |_, _| {})
}

/// Run and call `observe(state, record)` for every recorded iterate, before
/// the step from it is taken.
///
/// Records hold the full objective and gradient norm. Divergence (`f > 1e12`
/// or non-finite values) stops the run with [`RunStatus::Diverged`]; the
/// offending iterate is the last record.
pub fn run_observed(
    obj: &dyn Objective,
    theta0: &[f64],
    cfg: &RunConfig,
    observe: &mut dyn FnMut(&OptState, &TraceRecord),
) -> Result<Trace> {
    cfg.validate()?;
    if theta0.len() != obj.dim() {
        return Err(dim_err(format!("θ₀ has length {}, objective expects {}", theta0.len(), obj.dim())));
    }
    let m = obj.num_samples();
    let mut state = OptState::new(theta0.to_vec(), cfg.seed);
    let start = Instant::now();
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIter;

    loop {
        let k = state.k;
        let last = k == cfg.max_iter;
        let recorded = last || k % cfg.record_every == 0;
        let alpha = cfg.step.alpha(k);
        let bsize = cfg.batch.size(k, m);
        let mut full_grad = None;

        if recorded {
            let (f, g) = obj.value_and_gradient(&state.theta);
            let gn = norm(&g);
            let mut rec = TraceRecord::new(k, f, gn);
            rec.epoch = state.samples_seen as f64 / m as f64;
            if !last {
                rec.step_size = alpha;
                rec.batch_size = bsize.unwrap_or(m);
            }
            if cfg.record_wall_time {
                rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
            }
            let diverged = !f.is_finite() || f > DIVERGENCE_THRESHOLD || !gn.is_finite();
            observe(&state, &rec);
            records.push(rec);
            if diverged {
                status = RunStatus::Diverged;
                break;
            }
            if last {
                break;
            }
            if cfg.grad_tol > 0.0 && gn <= cfg.grad_tol {
                status = RunStatus::Converged;
                if let Some(r) = records.last_mut() {
                    r.step_size = 0.0;
                    r.batch_size = 0;
                }
                break;
            }
            full_grad = Some(g);
        }

        let idx;
        let batch = match bsize {
            None => Batch::Full,
            Some(b) => {
                idx = state.draw_batch(m, b, cfg.sampling);
                Batch::Indices(&idx)
            }
        };
        let stepped = match (full_grad, batch, &cfg.method) {
            (Some(g), Batch::Full, method) if !matches!(method, Method::Nag { .. }) => {
                step_with_gradient(method, &mut state, alpha, &g, m)
            }
            _ => method_step(obj, &cfg.method, &mut state, alpha, batch),
        };
        match stepped {
            Ok(()) => {}
            Err(Error::NonFinite(_)) => {
                status = RunStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        }
        if !all_finite(&state.theta) {
            let mut rec = TraceRecord::new(state.k, f64::NAN, f64::NAN);
            rec.epoch = state.samples_seen as f64 / m as f64;
            records.push(rec);
            status = RunStatus::Diverged;
            break;
        }
    }

    Ok(Trace { records, status, theta: state.theta, switch_at: None })
}
