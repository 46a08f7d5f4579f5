//! Two-stage training: Adam until the gradient norm plateaus, then L-BFGS.
//!
//! "Plateau" has no canonical definition. The rule implemented here smooths
//! the full gradient norm with a trailing window mean `ḡ_k` of length `W`
//! and compares it with the mean one window earlier. Comparisons happen
//! every `W` iterations once `min_iters + W` is reached, i.e. at
//! `k = min_iters + jW` for `j ≥ 1`. The switch fires at the first check
//! that completes a run of `P` consecutive checks with
//! `|ḡ_k − ḡ_{k−W}| / ḡ_{k−W} < ρ`. A constant sequence therefore switches at
//! `min_iters + W·P`. An infinite `ρ` makes the test vacuous and switches at
//! `min_iters` directly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::{
    method_step, step_with_gradient, Batch, BatchSchedule, Method, OptState, Phase, RunStatus, Sampling,
    StepSchedule, Trace, TraceRecord, DIVERGENCE_THRESHOLD,
};
use crate::numkit::norm;
use crate::problems::Objective;
use crate::secondorder::{lbfgs_run_from, LbfgsConfig};

/// When to hand over from Adam to L-BFGS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchPolicy {
    /// Smoothing window `W` (also the spacing of checks).
    pub window: usize,
    /// Relative-change threshold `ρ`.
    pub rel_threshold: f64,
    /// Consecutive passing checks `P` required.
    pub patience: usize,
    /// No switch before this iteration.
    pub min_iters: usize,
    /// Switch unconditionally here.
    pub max_adam_iters: usize,
}

impl Default for SwitchPolicy {
    fn default() -> Self {
        Self { window: 50, rel_threshold: 0.01, patience: 3, min_iters: 100, max_adam_iters: usize::MAX }
    }
}

impl SwitchPolicy {
    /// A policy that never switches.
    pub fn never() -> Self {
        Self { rel_threshold: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window >= 1 && self.patience >= 1 && self.rel_threshold >= 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("switch policy needs W ≥ 1, P ≥ 1, ρ ≥ 0; got {self:?}")))
        }
    }
}

/// Online form of the plateau rule; feed one gradient norm per iteration.
#[derive(Clone, Debug)]
pub struct PlateauDetector {
    policy: SwitchPolicy,
    norms: Vec<f64>,
    /// Prefix sums of `norms`.
    prefix: Vec<f64>,
    streak: usize,
}

impl PlateauDetector {
    pub fn new(policy: SwitchPolicy) -> Self {
        Self { policy, norms: Vec::new(), prefix: vec![0.0], streak: 0 }
    }

    /// Trailing mean over `W` values ending at `k` (shorter near the start).
    fn mean(&self, k: usize) -> f64 {
        let lo = (k + 1).saturating_sub(self.policy.window);
        (self.prefix[k + 1] - self.prefix[lo]) / (k + 1 - lo) as f64
    }

    /// Record `‖∇f(θ_k)‖` for the next `k`; returns whether to switch at this `k`.
    pub fn push(&mut self, grad_norm: f64) -> bool {
        let k = self.norms.len();
        self.norms.push(grad_norm);
        self.prefix.push(self.prefix[k] + grad_norm);
        let p = self.policy;
        if k < p.min_iters {
            return false;
        }
        if p.rel_threshold == f64::INFINITY {
            return true;
        }
        let w = p.window;
        if k < p.min_iters + w || (k - p.min_iters) % w != 0 {
            return false;
        }
        let (now, before) = (self.mean(k), self.mean(k - w));
        let rel = if before == 0.0 {
            if now == 0.0 { 0.0 } else { f64::INFINITY }
        } else {
            (now - before).abs() / before
        };
        if rel < p.rel_threshold {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= p.patience
    }
}

/// First iteration at which the plateau rule fires on a recorded sequence.
pub fn plateau_detector(grad_norms: &[f64], policy: &SwitchPolicy) -> Option<usize> {
    let mut det = PlateauDetector::new(*policy);
    grad_norms.iter().position(|&g| det.push(g))
}

/// Settings of a two-stage run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    /// First-stage optimizer, normally Adam.
    #[serde(default = "Method::adam")]
    pub method: Method,
    pub step: StepSchedule,
    #[serde(default = "full_batch")]
    pub batch: BatchSchedule,
    /// Second stage; its `max_iter` is ignored in favour of the remaining budget.
    pub lbfgs: LbfgsConfig,
    #[serde(default)]
    pub policy: SwitchPolicy,
    /// Total iterations over both stages.
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_wall_time: bool,
}

fn full_batch() -> BatchSchedule {
    BatchSchedule::Full
}

/// Run the first stage until the plateau rule fires (or `max_adam_iters`),
/// then L-BFGS with empty memory from the current iterate.
///
/// Records `0..switch` are labelled `adam` and the rest `lbfgs`; the
/// switch iterate itself is the first `lbfgs` record.
pub fn hybrid_run(obj: &dyn Objective, theta0: &[f64], cfg: &HybridConfig) -> Result<Trace> {
    cfg.policy.validate()?;
    cfg.method.validate()?;
    cfg.step.validate()?;
    cfg.batch.validate()?;
    if theta0.len() != obj.dim() {
        return Err(dim_err(format!("θ₀ has length {}, objective expects {}", theta0.len(), obj.dim())));
    }
    let m = obj.num_samples();
    let start = Instant::now();
    let mut state = OptState::new(theta0.to_vec(), cfg.seed);
    let mut det = PlateauDetector::new(cfg.policy);
    let mut records = Vec::new();
    let mut switch = None;

    for k in 0..=cfg.budget {
        let (f, g) = obj.value_and_gradient(&state.theta);
        let gn = norm(&g);
        if det.push(gn) || k >= cfg.policy.max_adam_iters {
            switch = Some(k);
            break;
        }
        let mut rec = TraceRecord::new(k, f, gn);
        rec.epoch = state.samples_seen as f64 / m as f64;
        rec.phase = Some(Phase::Adam);
        if cfg.record_wall_time {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        let done = k == cfg.budget;
        let diverged = !f.is_finite() || f > DIVERGENCE_THRESHOLD || !gn.is_finite();
        if !done && !diverged {
            rec.step_size = cfg.step.alpha(k);
            rec.batch_size = cfg.batch.size(k, m).unwrap_or(m);
        }
        records.push(rec);
        if diverged {
            return Ok(Trace { records, status: RunStatus::Diverged, theta: state.theta, switch_at: None });
        }
        if done {
            break;
        }
        let alpha = cfg.step.alpha(k);
        match cfg.batch.size(k, m) {
            None if !matches!(cfg.method, Method::Nag { .. }) => {
                step_with_gradient(&cfg.method, &mut state, alpha, &g, m)?;
            }
            None => method_step(obj, &cfg.method, &mut state, alpha, Batch::Full)?,
            Some(b) => {
                let idx = state.draw_batch(m, b, Sampling::WithReplacement);
                method_step(obj, &cfg.method, &mut state, alpha, Batch::Indices(&idx))?;
            }
        }
    }

    let Some(k_switch) = switch else {
        return Ok(Trace { records, status: RunStatus::MaxIter, theta: state.theta, switch_at: None });
    };
    let mut lcfg = cfg.lbfgs.clone();
    lcfg.max_iter = cfg.budget - k_switch;
    lcfg.record_wall_time = cfg.record_wall_time;
    let second = lbfgs_run_from(obj, &state.theta, &lcfg, k_switch, Some(Phase::Lbfgs))?;
    let offset_epoch = state.samples_seen as f64 / m as f64;
    let offset_ms = if cfg.record_wall_time { records.last().map_or(0.0, |r: &TraceRecord| r.wall_ms) } else { 0.0 };
    records.extend(second.records.into_iter().map(|mut r| {
        r.epoch += offset_epoch;
        r.wall_ms += offset_ms;
        r
    }));
    Ok(Trace { records, status: second.status, theta: second.theta, switch_at: Some(k_switch) })
}
