use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::hvp::{CurvatureOperator, HvpOracle};
use super::linesearch::{armijo_with, LineSearchParams};
use crate::error::{dim_err, invalid, Result};
use crate::firstorder::{RunStatus, Trace, TraceRecord, DIVERGENCE_THRESHOLD};
use crate::numkit::{cg_solve, dot, norm, step_to, CgFlag, RngStream};
use crate::problems::Objective;

/// Outcome of one curvature-aware step.
#[derive(Clone, Debug, PartialEq)]
pub struct NewtonStep {
    pub theta: Vec<f64>,
    /// Objective at the new point, as seen by the line search.
    pub f: f64,
    pub alpha: f64,
    pub direction: Vec<f64>,
    pub cg_iters: usize,
    pub cg_flag: CgFlag,
    pub ls_evals: usize,
    /// The CG direction was not a descent direction and `−∇f` was used.
    pub fallback: bool,
    /// The line search ran out of evaluations; the best point tried is returned.
    pub ls_failed: bool,
}

/// Forcing term `min(0.5, √‖g‖)`: CG tolerance tightens as the gradient shrinks.
pub fn forcing_term(grad_norm: f64) -> f64 {
    0.5f64.min(grad_norm.sqrt())
}

/// Solve `H p = −g` inexactly with CG and backtrack along `p`.
///
/// `value` evaluates the objective the line search works on; `f0` and `g`
/// are its value and gradient at `theta`.
#[allow(clippy::too_many_arguments)]
fn cg_newton<V>(
    op: &CurvatureOperator<'_>,
    value: V,
    theta: &[f64],
    f0: f64,
    g: &[f64],
    eta: f64,
    max_cg: usize,
    ls: &LineSearchParams,
) -> Result<NewtonStep>
where
    V: Fn(&[f64]) -> f64,
{
    if !(eta > 0.0 && eta < 1.0) {
        return Err(invalid(format!("forcing term must lie in (0, 1), got {eta}")));
    }
    ls.validate()?;
    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
    let cg = cg_solve(|v| op.apply(v), &rhs, eta, max_cg)?;
    let mut p = cg.x;
    let mut fallback = false;
    if !(dot(&p, g) < 0.0) {
        p = rhs;
        fallback = true;
    }
    if norm(g) == 0.0 {
        return Ok(NewtonStep {
            theta: theta.to_vec(),
            f: f0,
            alpha: 0.0,
            direction: p,
            cg_iters: cg.iterations,
            cg_flag: cg.flag,
            ls_evals: 0,
            fallback,
            ls_failed: false,
        });
    }
    let d0 = dot(&p, g);
    let r = armijo_with(|a| value(&step_to(theta, a, &p)), f0, d0, 1.0, ls);
    let (alpha, f) = if r.success || r.f < f0 { (r.alpha, r.f) } else { (0.0, f0) };
    Ok(NewtonStep {
        theta: step_to(theta, alpha, &p),
        f,
        alpha,
        direction: p,
        cg_iters: cg.iterations,
        cg_flag: cg.flag,
        ls_evals: r.evals,
        fallback,
        ls_failed: !r.success,
    })
}

fn cg_cap(n: usize) -> usize {
    2 * n + 10
}

/// Damped Gauss-Newton: `(JᵀJ/m + βI) p = −∇f` by CG, then backtracking.
pub fn gauss_newton_step(obj: &dyn Objective, theta: &[f64], beta: f64, ls: &LineSearchParams) -> Result<NewtonStep> {
    if !(beta >= 0.0) {
        return Err(invalid("damping must be non-negative"));
    }
    let op = CurvatureOperator::new(&HvpOracle::GaussNewton { beta }, obj, theta, None)?;
    let (f0, g) = obj.value_and_gradient(theta);
    cg_newton(&op, |x| obj.value(x), theta, f0, &g, 1e-10, cg_cap(theta.len()), ls)
}

/// Inexact Newton-CG with relative CG tolerance `eta`.
pub fn newton_cg_step(
    obj: &dyn Objective,
    theta: &[f64],
    hvp: &HvpOracle,
    eta: f64,
    ls: &LineSearchParams,
) -> Result<NewtonStep> {
    let op = CurvatureOperator::new(hvp, obj, theta, None)?;
    let (f0, g) = obj.value_and_gradient(theta);
    cg_newton(&op, |x| obj.value(x), theta, f0, &g, eta, cg_cap(theta.len()), ls)
}

/// Newton-CG with curvature from the samples `hess_idx` and gradient and
/// line search on the samples `grad_idx`.
pub fn subsampled_newton_step(
    obj: &dyn Objective,
    theta: &[f64],
    hess_idx: &[usize],
    grad_idx: &[usize],
    hvp: &HvpOracle,
    eta: f64,
    ls: &LineSearchParams,
) -> Result<NewtonStep> {
    if hess_idx.is_empty() || grad_idx.is_empty() {
        return Err(invalid("subsamples must be non-empty"));
    }
    let m = obj.num_samples();
    if hess_idx.iter().chain(grad_idx).any(|&i| i >= m) {
        return Err(invalid(format!("subsample index out of range for {m} samples")));
    }
    let op = CurvatureOperator::new(hvp, obj, theta, Some(hess_idx))?;
    let f0 = obj.batch_value(grad_idx, theta);
    let g = obj.batch_gradient(grad_idx, theta);
    cg_newton(&op, |x| obj.batch_value(grad_idx, x), theta, f0, &g, eta, cg_cap(theta.len()), ls)
}

/// Which curvature-aware step a [`newton_run`] takes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NewtonMethod {
    GaussNewton { beta: f64 },
    NewtonCg { hvp: HvpOracle },
    /// Fresh uniform subsamples (without replacement) every iteration;
    /// sizes at least `m` mean all samples.
    Subsampled { hvp: HvpOracle, hessian_batch: usize, gradient_batch: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewtonConfig {
    pub method: NewtonMethod,
    pub max_iter: usize,
    #[serde(default)]
    pub grad_tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub line_search: LineSearchParams,
    #[serde(default)]
    pub record_wall_time: bool,
}

impl NewtonConfig {
    pub fn new(method: NewtonMethod, max_iter: usize) -> Self {
        Self {
            method,
            max_iter,
            grad_tol: 0.0,
            seed: 0,
            line_search: LineSearchParams::default(),
            record_wall_time: false,
        }
    }
}

/// Iterate a curvature-aware step, recording full-objective observables.
/// Newton-CG variants use the forcing term [`forcing_term`].
pub fn newton_run(obj: &dyn Objective, theta0: &[f64], cfg: &NewtonConfig) -> Result<Trace> {
    if theta0.len() != obj.dim() {
        return Err(dim_err(format!("θ₀ has length {}, objective expects {}", theta0.len(), obj.dim())));
    }
    let m = obj.num_samples();
    let mut rng = RngStream::new(cfg.seed);
    let start = Instant::now();
    let mut theta = theta0.to_vec();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut status = RunStatus::MaxIter;
    let mut samples = 0u64;
    let mut stalls = 0;

    for k in 0..=cfg.max_iter {
        let (f, g) = obj.value_and_gradient(&theta);
        let gn = norm(&g);
        let mut rec = TraceRecord::new(k, f, gn);
        rec.epoch = samples as f64 / m as f64;
        if cfg.record_wall_time {
            rec.wall_ms = start.elapsed().as_secs_f64() * 1e3;
        }
        records.push(rec);
        if !f.is_finite() || f > DIVERGENCE_THRESHOLD || !gn.is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        if k == cfg.max_iter {
            break;
        }
        if (cfg.grad_tol > 0.0 && gn <= cfg.grad_tol) || gn == 0.0 {
            status = RunStatus::Converged;
            break;
        }
        let (step, batch) = match &cfg.method {
            NewtonMethod::GaussNewton { beta } => (gauss_newton_step(obj, &theta, *beta, &cfg.line_search)?, m),
            NewtonMethod::NewtonCg { hvp } => {
                (newton_cg_step(obj, &theta, hvp, forcing_term(gn), &cfg.line_search)?, m)
            }
            NewtonMethod::Subsampled { hvp, hessian_batch, gradient_batch } => {
                let draw = |rng: &mut RngStream, b: usize| -> Result<Vec<usize>> {
                    if b >= m {
                        Ok((0..m).collect())
                    } else {
                        rng.sample_without_replacement(m, b)
                    }
                };
                let ih = draw(&mut rng, *hessian_batch)?;
                let ig = draw(&mut rng, *gradient_batch)?;
                let gsub = if ig.len() == m { gn } else { norm(&obj.batch_gradient(&ig, &theta)) };
                let step = subsampled_newton_step(obj, &theta, &ih, &ig, hvp, forcing_term(gsub), &cfg.line_search)?;
                (step, ig.len())
            }
        };
        let last = records.last_mut().expect("pushed above");
        last.step_size = step.alpha;
        last.batch_size = batch;
        last.cg_iters = step.cg_iters;
        last.ls_evals = step.ls_evals;
        samples += batch as u64;
        if step.alpha == 0.0 {
            stalls += 1;
            if stalls == 2 {
                status = RunStatus::LineSearchFailed;
                break;
            }
        } else {
            stalls = 0;
        }
        theta = step.theta;
    }
    Ok(Trace { records, status, theta, switch_at: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{sub, Matrix};
    use crate::problems::{logistic_fixture, Dataset, LeastSquaresObjective, LinearModel, QuadraticObjective};

    fn linear_ls(seed: u64) -> LeastSquaresObjective<LinearModel> {
        let mut rng = RngStream::new(seed);
        let xs: Vec<Vec<f64>> = (0..25).map(|_| (0..3).map(|_| rng.std_normal()).collect()).collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] - 2.0 * x[2] + 0.3 * rng.std_normal()]).collect();
        LeastSquaresObjective::new(LinearModel { d_in: 3, d_out: 1, bias: true }, Dataset::new(xs, ys).unwrap()).unwrap()
    }

    #[test]
    fn gauss_newton_solves_linear_least_squares_in_one_step() {
        let obj = linear_ls(1);
        let step = gauss_newton_step(&obj, &[0.0; 4], 1e-14, &LineSearchParams::default()).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert!(norm(&obj.gradient(&step.theta)) <= 1e-10);
    }

    #[test]
    fn heavy_damping_points_down_the_gradient() {
        let obj = linear_ls(2);
        let theta = [0.5, -0.5, 1.0, 0.2];
        let step = gauss_newton_step(&obj, &theta, 1e8, &LineSearchParams::default()).unwrap();
        let g = obj.gradient(&theta);
        let cos = -dot(&step.direction, &g) / (norm(&step.direction) * norm(&g));
        assert!(cos.clamp(-1.0, 1.0).acos() <= 1e-3);
    }

    #[test]
    fn newton_on_quadratic_converges_in_one_step() {
        let a = Matrix::from_rows(&[vec![4.0, 1.0, 0.0], vec![1.0, 3.0, 0.5], vec![0.0, 0.5, 2.0]]).unwrap();
        let obj = QuadraticObjective::new(a, vec![1.0, 2.0, 3.0]).unwrap();
        let step = newton_cg_step(&obj, &[0.0; 3], &HvpOracle::Exact, 1e-14, &LineSearchParams::default()).unwrap();
        assert_eq!(step.alpha, 1.0);
        assert!(norm(&obj.gradient(&step.theta)) <= 1e-12);
    }

    #[test]
    fn identity_curvature_gives_negative_gradient() {
        let obj = QuadraticObjective::diagonal(&[1.0; 3], vec![1.0, -2.0, 0.5]).unwrap();
        let theta = [0.3, 0.1, -0.7];
        let step = newton_cg_step(&obj, &theta, &HvpOracle::Exact, 0.5, &LineSearchParams::default()).unwrap();
        let g = obj.gradient(&theta);
        for (p, gi) in step.direction.iter().zip(&g) {
            assert!((p + gi).abs() <= 1e-15);
        }
    }

    #[test]
    fn indefinite_curvature_falls_back_or_truncates_to_descent() {
        let obj = QuadraticObjective::diagonal(&[-1.0, 2.0], vec![0.0, 0.0]).unwrap();
        let theta = [1.0, 1.0];
        let step = newton_cg_step(&obj, &theta, &HvpOracle::Exact, 0.1, &LineSearchParams::default()).unwrap();
        assert!(dot(&step.direction, &obj.gradient(&theta)) < 0.0);
    }

    #[test]
    fn full_subsample_equals_newton_cg() {
        let obj = logistic_fixture(4);
        let theta = [0.2, 0.1, -0.3];
        let all: Vec<usize> = (0..obj.num_samples()).collect();
        let prm = LineSearchParams::default();
        let a = newton_cg_step(&obj, &theta, &HvpOracle::Exact, 0.1, &prm).unwrap();
        let b = subsampled_newton_step(&obj, &theta, &all, &all, &HvpOracle::Exact, 0.1, &prm).unwrap();
        let diff = norm(&sub(&a.direction, &b.direction));
        assert!(diff <= 1e-12 * norm(&a.direction));
    }

    #[test]
    fn subsampled_newton_tracks_full_newton_on_logistic() {
        let obj = logistic_fixture(0);
        let m = obj.num_samples();
        let full = newton_run(&obj, &[0.0; 3], &NewtonConfig::new(NewtonMethod::NewtonCg { hvp: HvpOracle::Exact }, 20)).unwrap();
        let mut cfg = NewtonConfig::new(
            NewtonMethod::Subsampled { hvp: HvpOracle::Exact, hessian_batch: m / 8, gradient_batch: m },
            20,
        );
        cfg.seed = 5;
        let sub = newton_run(&obj, &[0.0; 3], &cfg).unwrap();
        assert!(sub.final_f() <= 2.0 * full.final_f());
    }
}
