use super::{axpy, dot, norm};
use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CgFlag {
    Converged,
    /// A direction `d` with `dᵀ A d ≤ 0` was met; the iterate is the one before it.
    NegativeCurvature,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub flag: CgFlag,
    pub residual_norm: f64,
}

/// Conjugate gradients for `A x = b` with `A` given as an operator.
///
/// Stops once `‖A x − b‖ ≤ tol · ‖b‖`. When a direction of non-positive
/// curvature shows up the current iterate is returned (truncated CG); if that
/// happens on the very first direction the result is `b` itself, i.e. the
/// steepest-descent direction of the quadratic model `½xᵀAx − bᵀx` at zero.
pub fn cg_solve<F>(mut apply_a: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgResult>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if !(tol > 0.0) {
        return Err(invalid("cg tolerance must be positive"));
    }
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgResult {
            x,
            iterations: 0,
            flag: CgFlag::Converged,
            residual_norm: 0.0,
        });
    }
    let target = tol * bnorm;
    let mut r = b.to_vec();
    let mut d = r.clone();
    let mut rr = dot(&r, &r);

    for it in 0..max_iter {
        let ad = apply_a(&d);
        let curv = dot(&d, &ad);
        if curv <= 0.0 || !curv.is_finite() {
            if it == 0 {
                x = b.to_vec();
            }
            return Ok(CgResult {
                x,
                iterations: it,
                flag: CgFlag::NegativeCurvature,
                residual_norm: rr.sqrt(),
            });
        }
        let alpha = rr / curv;
        axpy(alpha, &d, &mut x);
        axpy(-alpha, &ad, &mut r);
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= target {
            return Ok(CgResult {
                x,
                iterations: it + 1,
                flag: CgFlag::Converged,
                residual_norm: rr_new.sqrt(),
            });
        }
        let beta = rr_new / rr;
        for (di, ri) in d.iter_mut().zip(&r) {
            *di = ri + beta * *di;
        }
        rr = rr_new;
    }
    Ok(CgResult {
        x,
        iterations: max_iter,
        flag: CgFlag::MaxIter,
        residual_norm: rr.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_one_iteration() {
        let b = [1.0, -2.0, 3.5];
        let res = cg_solve(|v| v.to_vec(), &b, 1e-12, 10).unwrap();
        assert_eq!(res.iterations, 1);
        assert_eq!(res.flag, CgFlag::Converged);
        assert_eq!(res.x, b.to_vec());
    }

    #[test]
    fn diagonal_system() {
        let d = [1.0, 2.0, 3.0];
        let res = cg_solve(
            |v| v.iter().zip(&d).map(|(a, b)| a * b).collect(),
            &[1.0, 1.0, 1.0],
            1e-14,
            10,
        )
        .unwrap();
        assert_eq!(res.flag, CgFlag::Converged);
        for (x, want) in res.x.iter().zip([1.0, 0.5, 1.0 / 3.0]) {
            assert!((x - want).abs() < 1e-14);
        }
    }

    #[test]
    fn negative_curvature_first_step_returns_rhs() {
        let b = [1.0, 2.0];
        let res = cg_solve(|v| v.iter().map(|x| -x).collect(), &b, 1e-10, 10).unwrap();
        assert_eq!(res.flag, CgFlag::NegativeCurvature);
        assert_eq!(res.x, b.to_vec());
    }

    #[test]
    fn negative_curvature_later_keeps_iterate() {
        // diag(1, -1): the first direction has positive curvature, the second does not.
        let res = cg_solve(|v| vec![v[0], -v[1]], &[1.0, 0.5], 1e-10, 10).unwrap();
        assert_eq!(res.flag, CgFlag::NegativeCurvature);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn max_iter_flag() {
        let d = [1.0, 10.0, 100.0];
        let res = cg_solve(
            |v| v.iter().zip(&d).map(|(a, b)| a * b).collect(),
            &[1.0, 1.0, 1.0],
            1e-14,
            1,
        )
        .unwrap();
        assert_eq!(res.flag, CgFlag::MaxIter);
    }

    #[test]
    fn rejects_bad_tol() {
        assert!(cg_solve(|v| v.to_vec(), &[1.0], 0.0, 1).is_err());
    }
}
