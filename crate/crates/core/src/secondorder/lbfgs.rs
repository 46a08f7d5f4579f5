use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::linesearch::{line_search_armijo, line_search_wolfe, LineSearchParams};
use crate::error::{dim_err, invalid, Result};
use crate::firstorder::{Phase, RunStatus, Trace, TraceRecord, DIVERGENCE_THRESHOLD};
use crate::numkit::{dot, norm, step_to, sub, Matrix};
use crate::problems::Objective;

/// Relative threshold of the curvature test `yᵀs > δ‖y‖‖s‖`.
pub const CURVATURE_SKIP: f64 = 1e-10;

/// `s = θ_{k+1} − θ_k`, `y = ∇f_{k+1} − ∇f_k`, `ρ = 1/(yᵀs)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SecantPair {
    pub s: Vec<f64>,
    pub y: Vec<f64>,
    pub rho: f64,
}

/// The `S` most recent secant pairs and the initial scaling `τ`.
///
/// Pairs are stored from the first iteration and the oldest is evicted once
/// more than `S` are held.
#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsMemory {
    capacity: usize,
    pairs: VecDeque<SecantPair>,
    tau: f64,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, pairs: VecDeque::with_capacity(capacity), tau: 1.0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Scaling of the initial inverse-Hessian guess `τI`.
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn pairs(&self) -> impl Iterator<Item = &SecantPair> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.tau = 1.0;
    }

    /// Store `(s, y)` if it passes the curvature test; returns whether it was kept.
    /// `τ` is set to `sᵀy / yᵀy` of the newest accepted pair.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let ys = dot(&y, &s);
        if !(ys > CURVATURE_SKIP * norm(&y) * norm(&s)) {
            return false;
        }
        self.tau = ys / dot(&y, &y);
        if self.capacity == 0 {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(SecantPair { rho: 1.0 / ys, s, y });
        true
    }

    /// Two-loop recursion: the inverse-Hessian approximation applied to `g`.
    pub fn two_loop(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for p in self.pairs.iter().rev() {
            let a = p.rho * dot(&p.s, &q);
            for (qi, yi) in q.iter_mut().zip(&p.y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let tau = if self.pairs.is_empty() { 1.0 } else { self.tau };
        q.iter_mut().for_each(|v| *v *= tau);
        for (p, a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = p.rho * dot(&p.y, &q);
            for (qi, si) in q.iter_mut().zip(&p.s) {
                *qi += (a - b) * si;
            }
        }
        q
    }

    /// The same operator as a dense matrix, built by repeated BFGS updates of `τI`.
    pub fn dense_inverse(&self, n: usize) -> Matrix {
        let tau = if self.pairs.is_empty() { 1.0 } else { self.tau };
        let mut h = Matrix::identity(n);
        h.scale(tau);
        for p in &self.pairs {
            h = bfgs_inverse_update(&h, &p.s, &p.y);
        }
        h
    }
}

/// `(I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ` with `ρ = 1/(yᵀs)`.
pub fn bfgs_inverse_update(h: &Matrix, s: &[f64], y: &[f64]) -> Matrix {
    let n = s.len();
    let rho = 1.0 / dot(y, s);
    let hy = h.matvec(y);
    let yhy = dot(y, &hy);
    // Expanded: H − ρ(s (Hy)ᵀ + (Hy) sᵀ) + (ρ² yᵀHy + ρ) ssᵀ  (H symmetric)
    let mut out = h.clone();
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] += -rho * (s[i] * hy[j] + hy[i] * s[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
    out
}

/// Settings of an L-BFGS run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LbfgsConfig {
    /// Number of stored secant pairs; 0 gives gradient descent with Wolfe steps.
    #[serde(default = "default_memory")]
    pub memory: usize,
    pub max_iter: usize,
    #[serde(default)]
    pub grad_tol: f64,
    #[serde(default)]
    pub line_search: LineSearchParams,
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_memory() -> usize {
    10
}

impl LbfgsConfig {
    pub fn new(max_iter: usize) -> Self {
        Self {
            memory: default_memory(),
            max_iter,
            grad_tol: 0.0,
            line_search: LineSearchParams::default(),
            record_wall_time: false,
        }
    }
}

/// L-BFGS with strong-Wolfe steps.
///
/// When the line search fails the memory is cleared and a backtracking
/// gradient step is taken instead; a second consecutive failure ends the run
/// with [`RunStatus::LineSearchFailed`].
pub fn lbfgs_run(obj: &dyn Objective, theta0: &[f64], cfg: &LbfgsConfig) -> Result<Trace> {
    lbfgs_run_from(obj, theta0, cfg, 0, None)
}

/// [`lbfgs_run`] with iteration numbers starting at `k0` and every record
/// labelled `phase`.
pub fn lbfgs_run_from(
    obj: &dyn Objective,
    theta0: &[f64],
    cfg: &LbfgsConfig,
    k0: usize,
    phase: Option<Phase>,
) -> Result<Trace> {
    cfg.line_search.validate()?;
    if theta0.len() != obj.dim() {
        return Err(dim_err(format!("θ₀ has length {}, objective expects {}", theta0.len(), obj.dim())));
    }
    if !(cfg.grad_tol >= 0.0) {
        return Err(invalid("grad_tol must be non-negative"));
    }
    let start = Instant::now();
    let mut mem = LbfgsMemory::new(cfg.memory);
    let mut theta = theta0.to_vec();
    let (mut f, mut g) = obj.value_and_gradient(&theta);
    let mut records = Vec::new();
    let mut status = RunStatus::MaxIter;
    let mut failed_last = false;
    let mut evals_total = 0usize;

    for it in 0..=cfg.max_iter {
        let gn = norm(&g);
        let mut rec = TraceRecord::new(k0 + it, f, gn);
        rec.epoch = evals_total as f64;
        rec.batch_size = obj.num_samples();
        rec.phase = phase;
        if cfg.record_wall_time {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        records.push(rec);
        if !f.is_finite() || f > DIVERGENCE_THRESHOLD || !gn.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        if it == cfg.max_iter {
            break;
        }
        if cfg.grad_tol > 0.0 && gn <= cfg.grad_tol || gn == 0.0 {
            status = RunStatus::Converged;
            break;
        }

        let mut p: Vec<f64> = mem.two_loop(&g).iter().map(|v| -v).collect();
        if !(dot(&p, &g) < 0.0) {
            mem.clear();
            p = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if mem.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
        let ls = line_search_wolfe(obj, &theta, f, &g, &p, alpha0, &cfg.line_search)?;
        let mut evals = ls.evals;
        let (next, f_next, g_next) = if ls.success {
            failed_last = false;
            let next = step_to(&theta, ls.alpha, &p);
            let g_next = ls.grad.unwrap_or_else(|| obj.gradient(&next));
            (next, ls.f, g_next)
        } else {
            mem.clear();
            if failed_last {
                status = RunStatus::LineSearchFailed;
                break;
            }
            failed_last = true;
            let d: Vec<f64> = g.iter().map(|v| -v).collect();
            let bt = line_search_armijo(obj, &theta, f, &g, &d, (1.0 / gn).min(1.0), &cfg.line_search)?;
            evals += bt.evals;
            if !bt.success {
                status = RunStatus::LineSearchFailed;
                break;
            }
            let next = step_to(&theta, bt.alpha, &d);
            let (fv, gv) = obj.value_and_gradient(&next);
            p = d;
            (next, fv, gv)
        };
        let last = records.last_mut().expect("pushed above");
        last.step_size = dot(&sub(&next, &theta), &p) / dot(&p, &p);
        last.ls_evals = evals;
        evals_total += evals;

        if !failed_last {
            mem.push(sub(&next, &theta), sub(&g_next, &g));
        }
        theta = next;
        f = f_next;
        g = g_next;
    }

    Ok(Trace { records, status, theta, switch_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;
    use crate::problems::QuadraticObjective;

    #[test]
    fn empty_memory_is_identity() {
        let m = LbfgsMemory::new(5);
        assert_eq!(m.two_loop(&[1.0, -2.0]), vec![1.0, -2.0]);
    }

    #[test]
    fn single_pair_matches_dense_update() {
        let mut rng = RngStream::new(11);
        for _ in 0..20 {
            let n = 6;
            let s: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
            let mut y: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
            if dot(&y, &s) <= 0.0 {
                y.iter_mut().for_each(|v| *v = -*v);
            }
            let mut mem = LbfgsMemory::new(3);
            assert!(mem.push(s.clone(), y.clone()));
            let g: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
            let mut h0 = Matrix::identity(n);
            h0.scale(dot(&s, &y) / dot(&y, &y));
            let want = bfgs_inverse_update(&h0, &s, &y).matvec(&g);
            let got = mem.two_loop(&g);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn skip_rule_and_eviction() {
        let mut mem = LbfgsMemory::new(2);
        assert!(!mem.push(vec![1.0, 0.0], vec![-1.0, 0.0]));
        assert!(!mem.push(vec![1.0, 0.0], vec![0.0, 1.0]));
        for k in 1..=3 {
            assert!(mem.push(vec![k as f64, 0.0], vec![1.0, 0.0]));
        }
        assert_eq!(mem.len(), 2);
        let firsts: Vec<f64> = mem.pairs().map(|p| p.s[0]).collect();
        assert_eq!(firsts, vec![2.0, 3.0]);
    }

    #[test]
    fn quadratic_termination_in_two_dimensions() {
        let a = Matrix::from_rows(&[vec![5.0, 2.0], vec![2.0, 1.0]]).unwrap();
        let obj = QuadraticObjective::new(a, vec![1.0, -3.0]).unwrap();
        let star = obj.minimizer().unwrap();
        // Quadratic termination presumes exact line searches; a tiny c₂ makes
        // the strong-Wolfe search exact up to rounding.
        let mut cfg = LbfgsConfig::new(3);
        cfg.line_search.c1 = 1e-10;
        cfg.line_search.c2 = 1e-8;
        let t = lbfgs_run(&obj, &[4.0, 4.0], &cfg).unwrap();
        let err = norm(&sub(&t.theta, &star));
        assert!(err <= 1e-8, "error {err}");
    }

    #[test]
    fn zero_memory_is_gradient_descent_with_wolfe() {
        let obj = QuadraticObjective::diagonal(&[1.0, 20.0], vec![0.0, 0.0]).unwrap();
        let mut cfg = LbfgsConfig::new(15);
        cfg.memory = 0;
        let t = lbfgs_run(&obj, &[1.0, 1.0], &cfg).unwrap();
        let prm = LineSearchParams::default();
        let mut theta = vec![1.0, 1.0];
        for _ in 0..15 {
            let (f, g) = obj.value_and_gradient(&theta);
            if norm(&g) == 0.0 {
                break;
            }
            let p: Vec<f64> = g.iter().map(|v| -v).collect();
            let ls = line_search_wolfe(&obj, &theta, f, &g, &p, (1.0 / norm(&g)).min(1.0), &prm).unwrap();
            theta = step_to(&theta, ls.alpha, &p);
        }
        assert_eq!(t.theta, theta);
    }

    #[test]
    fn directions_are_descent_and_steps_decrease() {
        let mut rng = RngStream::new(2);
        let lam: Vec<f64> = (0..8).map(|i| 1.0 + 10.0 * i as f64).collect();
        let obj = QuadraticObjective::diagonal(&lam, (0..8).map(|_| rng.std_normal()).collect()).unwrap();
        let t = lbfgs_run(&obj, &[0.0; 8], &LbfgsConfig::new(40)).unwrap();
        for w in t.records.windows(2) {
            assert!(w[1].f <= w[0].f);
        }
        assert!(t.final_grad_norm() < 1e-8);
    }
}
