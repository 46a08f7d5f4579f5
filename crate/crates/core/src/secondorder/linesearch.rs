use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numkit::{dot, step_to};
use crate::problems::Objective;

/// Sufficient-decrease and curvature constants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineSearchParams {
    pub c1: f64,
    pub c2: f64,
    /// Backtracking factor.
    pub shrink: f64,
    /// Function evaluations allowed per search.
    pub max_evals: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self { c1: 1e-4, c2: 0.9, shrink: 0.5, max_evals: 25 }
    }
}

impl LineSearchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.c1
            && self.c1 < self.c2
            && self.c2 < 1.0
            && 0.0 < self.shrink
            && self.shrink < 1.0
            && self.max_evals >= 1;
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("need 0 < c1 < c2 < 1, 0 < shrink < 1, max_evals ≥ 1; got {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearchResult {
    pub alpha: f64,
    /// Objective at `θ + αp` (at the best point tried when unsuccessful).
    pub f: f64,
    /// Gradient at `θ + αp`, when the search evaluated it.
    pub grad: Option<Vec<f64>>,
    pub evals: usize,
    pub success: bool,
}

fn slope(g0: &[f64], p: &[f64]) -> Result<f64> {
    let d = dot(g0, p);
    if d < 0.0 {
        Ok(d)
    } else {
        Err(Error::LineSearch(format!("not a descent direction (pᵀ∇f = {d:.3e})")))
    }
}

/// Backtracking from `alpha0` until `φ(α) ≤ f0 + c₁ α pᵀ∇f`.
pub(crate) fn armijo_with<F>(mut phi: F, f0: f64, d0: f64, alpha0: f64, prm: &LineSearchParams) -> LineSearchResult
where
    F: FnMut(f64) -> f64,
{
    let mut alpha = alpha0;
    let mut best = (f64::INFINITY, alpha0);
    for evals in 1..=prm.max_evals {
        let f = phi(alpha);
        if f < best.0 {
            best = (f, alpha);
        }
        if f <= f0 + prm.c1 * alpha * d0 {
            return LineSearchResult { alpha, f, grad: None, evals, success: true };
        }
        alpha *= prm.shrink;
    }
    LineSearchResult { alpha: best.1, f: best.0, grad: None, evals: prm.max_evals, success: false }
}

/// Backtracking (Armijo) search along the descent direction `p`.
///
/// `f0` and `g0` are the value and gradient at `theta`.
pub fn line_search_armijo(
    obj: &dyn Objective,
    theta: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
    alpha0: f64,
    prm: &LineSearchParams,
) -> Result<LineSearchResult> {
    prm.validate()?;
    let d0 = slope(g0, p)?;
    Ok(armijo_with(|a| obj.value(&step_to(theta, a, p)), f0, d0, alpha0, prm))
}

/// Minimizer of the cubic through `(a, fa, da)` and `(b, fb, db)`, if it is real.
fn cubic_min(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let x = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    x.is_finite().then_some(x)
}

/// Strong-Wolfe search: bracketing by doubling, then a zoom phase with
/// safeguarded cubic interpolation.
///
/// Accepts `α` with `f(θ+αp) ≤ f0 + c₁α pᵀg0` and `|pᵀ∇f(θ+αp)| ≤ c₂|pᵀg0|`.
/// An unsuccessful result carries the lowest point seen.
pub fn line_search_wolfe(
    obj: &dyn Objective,
    theta: &[f64],
    f0: f64,
    g0: &[f64],
    p: &[f64],
    alpha0: f64,
    prm: &LineSearchParams,
) -> Result<LineSearchResult> {
    prm.validate()?;
    let d0 = slope(g0, p)?;
    let mut evals = 0;
    let eval = |a: f64| {
        let (f, g) = obj.value_and_gradient(&step_to(theta, a, p));
        let d = dot(&g, p);
        (f, d, g)
    };

    let mut best: (f64, f64) = (f0, 0.0);
    let note = |best: &mut (f64, f64), a: f64, f: f64| {
        if f.is_finite() && f < best.0 {
            *best = (f, a);
        }
    };
    let fail = |best: (f64, f64), evals| LineSearchResult {
        alpha: best.1,
        f: best.0,
        grad: None,
        evals,
        success: false,
    };

    let (mut a_prev, mut f_prev, mut d_prev) = (0.0, f0, d0);
    let mut a = alpha0;
    let (lo, hi);
    loop {
        if evals >= prm.max_evals {
            return Ok(fail(best, evals));
        }
        let (f, d, g) = eval(a);
        evals += 1;
        note(&mut best, a, f);
        if !f.is_finite() {
            // Overshot into a region where the objective blows up: retreat.
            a = 0.5 * (a_prev + a);
            continue;
        }
        if f > f0 + prm.c1 * a * d0 || (evals > 1 && f >= f_prev) {
            lo = (a_prev, f_prev, d_prev);
            hi = (a, f, d);
            break;
        }
        if d.abs() <= -prm.c2 * d0 {
            return Ok(LineSearchResult { alpha: a, f, grad: Some(g), evals, success: true });
        }
        if d >= 0.0 {
            lo = (a, f, d);
            hi = (a_prev, f_prev, d_prev);
            break;
        }
        a_prev = a;
        f_prev = f;
        d_prev = d;
        a *= 2.0;
    }

    let (mut lo, mut hi) = (lo, hi);
    while evals < prm.max_evals {
        let (left, right) = if lo.0 < hi.0 { (lo.0, hi.0) } else { (hi.0, lo.0) };
        let width = right - left;
        if width <= f64::EPSILON * right.abs().max(1e-300) {
            break;
        }
        let guard = 0.1 * width;
        let a = match cubic_min(lo.0, lo.1, lo.2, hi.0, hi.1, hi.2) {
            Some(x) if x > left + guard && x < right - guard => x,
            _ => 0.5 * (left + right),
        };
        let (f, d, g) = eval(a);
        evals += 1;
        note(&mut best, a, f);
        if !f.is_finite() || f > f0 + prm.c1 * a * d0 || f >= lo.1 {
            hi = (a, f, d);
            continue;
        }
        if d.abs() <= -prm.c2 * d0 {
            return Ok(LineSearchResult { alpha: a, f, grad: Some(g), evals, success: true });
        }
        if d * (hi.0 - lo.0) >= 0.0 {
            hi = lo;
        }
        lo = (a, f, d);
    }
    Ok(fail(best, evals))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::Matrix;
    use crate::problems::QuadraticObjective;

    fn square() -> QuadraticObjective {
        // f = θ²
        QuadraticObjective::diagonal(&[2.0], vec![0.0]).unwrap()
    }

    #[test]
    fn armijo_hand_sequence() {
        let obj = square();
        let r = line_search_armijo(&obj, &[1.0], 1.0, &[2.0], &[-2.0], 1.0, &LineSearchParams::default()).unwrap();
        assert_eq!(r.alpha, 0.5);
        assert_eq!(r.f, 0.0);
        assert_eq!(r.evals, 2);
        assert!(r.success);
    }

    #[test]
    fn newton_direction_takes_unit_step() {
        let a = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let obj = QuadraticObjective::new(a.clone(), vec![1.0, -1.0]).unwrap();
        let theta = [0.5, 0.5];
        let (f0, g0) = obj.value_and_gradient(&theta);
        let p: Vec<f64> = a.solve(&g0).unwrap().iter().map(|v| -v).collect();
        let prm = LineSearchParams::default();
        let r = line_search_armijo(&obj, &theta, f0, &g0, &p, 1.0, &prm).unwrap();
        assert_eq!((r.alpha, r.evals), (1.0, 1));
        let w = line_search_wolfe(&obj, &theta, f0, &g0, &p, 1.0, &prm).unwrap();
        assert_eq!((w.alpha, w.evals), (1.0, 1));
    }

    #[test]
    fn non_descent_rejected() {
        let obj = square();
        let prm = LineSearchParams::default();
        assert!(line_search_armijo(&obj, &[1.0], 1.0, &[2.0], &[1.0], 1.0, &prm).is_err());
        assert!(line_search_wolfe(&obj, &[1.0], 1.0, &[2.0], &[0.0], 1.0, &prm).is_err());
    }

    #[test]
    fn wolfe_conditions_hold_on_accepted_steps() {
        // Badly scaled direction: needs extrapolation first, then shrinking.
        let obj = QuadraticObjective::diagonal(&[1.0, 50.0], vec![0.0, 0.0]).unwrap();
        let prm = LineSearchParams::default();
        for (theta, scale) in [([1.0, 1.0], 1e-4), ([3.0, -0.2], 10.0), ([0.1, 2.0], 1.0)] {
            let (f0, g0) = obj.value_and_gradient(&theta);
            let p: Vec<f64> = g0.iter().map(|g| -scale * g).collect();
            let r = line_search_wolfe(&obj, &theta, f0, &g0, &p, 1.0, &prm).unwrap();
            assert!(r.success);
            let d0 = dot(&g0, &p);
            let x = step_to(&theta, r.alpha, &p);
            assert!(obj.value(&x) <= f0 + prm.c1 * r.alpha * d0);
            assert!(dot(&obj.gradient(&x), &p).abs() <= prm.c2 * d0.abs());
            // Wolfe implies the curvature condition yᵀs > 0.
            let y: Vec<f64> = obj.gradient(&x).iter().zip(&g0).map(|(a, b)| a - b).collect();
            let s: Vec<f64> = p.iter().map(|v| r.alpha * v).collect();
            assert!(dot(&y, &s) > 0.0);
        }
    }

    #[test]
    fn cubic_recovers_quadratic_minimizer() {
        // f = (x − 2)²
        let f = |x: f64| (x - 2.0) * (x - 2.0);
        let df = |x: f64| 2.0 * (x - 2.0);
        let x = cubic_min(0.0, f(0.0), df(0.0), 5.0, f(5.0), df(5.0)).unwrap();
        assert!((x - 2.0).abs() < 1e-12);
    }
}
