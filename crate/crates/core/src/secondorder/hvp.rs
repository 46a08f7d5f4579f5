use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numkit::{norm, Matrix};
use crate::problems::Objective;

/// Curvature operator used inside CG.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HvpOracle {
    /// `v ↦ (1/m)Jᵀ(Jv) + βv`; least-squares objectives only.
    GaussNewton { beta: f64 },
    /// Central difference of gradients with step `1e-6(1+‖θ‖)/‖v‖`.
    FiniteDiff,
    /// The objective's own Hessian-vector product.
    Exact,
}

/// Relative scale of the finite-difference Hessian-vector step.
pub const FD_HVP_STEP: f64 = 1e-6;

/// `(∇f_I(θ+εv) − ∇f_I(θ−εv)) / 2ε`.
pub fn fd_hvp(obj: &dyn Objective, idx: Option<&[usize]>, theta: &[f64], v: &[f64]) -> Vec<f64> {
    let vn = norm(v);
    if vn == 0.0 {
        return vec![0.0; v.len()];
    }
    let eps = FD_HVP_STEP * (1.0 + norm(theta)) / vn;
    let plus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t + eps * d).collect();
    let minus: Vec<f64> = theta.iter().zip(v).map(|(t, d)| t - eps * d).collect();
    let grad = |x: &[f64]| match idx {
        Some(i) => obj.batch_gradient(i, x),
        None => obj.gradient(x),
    };
    let (gp, gm) = (grad(&plus), grad(&minus));
    gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * eps)).collect()
}

/// A curvature operator frozen at one `θ`, ready for repeated products.
pub struct CurvatureOperator<'a> {
    obj: &'a dyn Objective,
    theta: Vec<f64>,
    idx: Option<Vec<usize>>,
    kind: Kind,
}

enum Kind {
    /// Jacobian rows restricted to the subsample, and the sample count they average over.
    Gn { jac: Matrix, count: usize, beta: f64 },
    Fd,
    Exact,
}

impl<'a> CurvatureOperator<'a> {
    /// Build the operator for the samples `idx` (all when `None`).
    ///
    /// The Gauss-Newton form evaluates the Jacobian once here. With a
    /// subsample it keeps the residual rows belonging to those samples, which
    /// requires the residual count to be a multiple of the sample count.
    pub fn new(oracle: &HvpOracle, obj: &'a dyn Objective, theta: &[f64], idx: Option<&[usize]>) -> Result<Self> {
        let kind = match *oracle {
            HvpOracle::GaussNewton { beta } => {
                if !(beta >= 0.0) {
                    return Err(invalid("damping must be non-negative"));
                }
                let ls = obj
                    .as_least_squares()
                    .ok_or_else(|| invalid("Gauss-Newton curvature needs a least-squares objective"))?;
                let full = ls.jacobian(theta);
                let m = obj.num_samples();
                match idx {
                    None => Kind::Gn { jac: full, count: m, beta },
                    Some(sel) => {
                        if full.rows() % m != 0 {
                            return Err(invalid("residual rows do not split evenly over samples"));
                        }
                        let per = full.rows() / m;
                        let mut rows = Vec::with_capacity(sel.len() * per);
                        for &i in sel {
                            for r in 0..per {
                                rows.push(full.row(i * per + r).to_vec());
                            }
                        }
                        Kind::Gn { jac: Matrix::from_rows(&rows)?, count: sel.len(), beta }
                    }
                }
            }
            HvpOracle::FiniteDiff => Kind::Fd,
            HvpOracle::Exact => {
                let probe = vec![0.0; obj.dim()];
                if obj.batch_hvp(idx, theta, &probe).is_none() {
                    return Err(invalid("objective has no exact Hessian-vector product"));
                }
                Kind::Exact
            }
        };
        Ok(Self { obj, theta: theta.to_vec(), idx: idx.map(<[usize]>::to_vec), kind })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        match &self.kind {
            Kind::Gn { jac, count, beta } => {
                let jv = jac.matvec(v);
                let mut out = jac.tr_matvec(&jv);
                let inv = 1.0 / *count as f64;
                for (o, vi) in out.iter_mut().zip(v) {
                    *o = *o * inv + beta * vi;
                }
                out
            }
            Kind::Fd => fd_hvp(self.obj, self.idx.as_deref(), &self.theta, v),
            Kind::Exact => self
                .obj
                .batch_hvp(self.idx.as_deref(), &self.theta, v)
                .expect("checked at construction"),
        }
    }
}

impl HvpOracle {
    /// One product `H(θ) v` over the samples `idx` (all when `None`).
    pub fn apply(&self, obj: &dyn Objective, theta: &[f64], v: &[f64], idx: Option<&[usize]>) -> Result<Vec<f64>> {
        let out = CurvatureOperator::new(self, obj, theta, idx)?.apply(v);
        if out.iter().all(|x| x.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NonFinite("Hessian-vector product".into()))
        }
    }
}
