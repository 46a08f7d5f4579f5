//! Kernel diagnostics: empirical and preconditioned NTKs, mode-decay
//! prediction, spectral-bias measurement and 2-D loss-landscape slices.

mod landscape;
mod spectral;

pub use landscape::{landscape_projection, LandscapeGrid, LandscapeOptions};
pub use spectral::{band_errors, spectral_bias_report, Band, SpectralBiasReport, SPECTRAL_BANDS};

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::{fmt_real, OptState};
use crate::numkit::{condition_number_floored, sym_eigen, EigenDecomposition, Matrix};
use crate::problems::LeastSquares;

/// Eigenvalues at or below this fraction of `λmax` are excluded from `κ`.
pub const KAPPA_FLOOR: f64 = 1e-12;

/// The metric `M` in `(1/m) J M⁻¹ Jᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Preconditioner {
    Identity,
    /// `M = diag(d)`.
    AdamDiag(Vec<f64>),
    /// `M = (1/m)JᵀJ + βI`, evaluated at the same `θ` as the kernel.
    GaussNewton { beta: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PreconditionerTag {
    Identity,
    AdamDiag,
    GaussNewton { beta: f64 },
}

impl Preconditioner {
    pub fn tag(&self) -> PreconditionerTag {
        match self {
            Preconditioner::Identity => PreconditionerTag::Identity,
            Preconditioner::AdamDiag(_) => PreconditionerTag::AdamDiag,
            Preconditioner::GaussNewton { beta } => PreconditionerTag::GaussNewton { beta: *beta },
        }
    }
}

/// A kernel matrix with its spectrum.
#[derive(Clone, Debug)]
pub struct KernelReport {
    pub kernel: Matrix,
    pub eigen: EigenDecomposition,
    /// `λmax / λmin` over eigenvalues above `KAPPA_FLOOR · λmax`.
    pub kappa: f64,
    /// Eigenvalues excluded from `kappa`.
    pub floored: usize,
    pub preconditioner: PreconditionerTag,
}

impl KernelReport {
    pub fn from_kernel(kernel: Matrix, preconditioner: PreconditionerTag) -> Result<Self> {
        let kernel = kernel.symmetrized();
        let eigen = sym_eigen(&kernel)?;
        let (kappa, floored) = condition_number_floored(&eigen.eigenvalues, KAPPA_FLOOR);
        Ok(Self { kernel, eigen, kappa, floored, preconditioner })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigen.eigenvalues
    }

    /// `index,eigenvalue`, largest first.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("index,eigenvalue\n");
        for (i, l) in self.eigen.eigenvalues.iter().enumerate() {
            let _ = writeln!(s, "{i},{}", fmt_real(*l));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// `(1/m) J M⁻¹ Jᵀ` from a residual Jacobian with `m` samples.
///
/// The Gauss-Newton metric uses the push-through identity
/// `J(JᵀJ/m + βI)⁻¹Jᵀ/m = Θ(Θ + βI)⁻¹` whenever that system is smaller than
/// the parameter-space one.
pub fn kernel_from_jacobian(jac: &Matrix, m: usize, prec: &Preconditioner) -> Result<KernelReport> {
    if m == 0 || jac.rows() == 0 {
        return Err(invalid("kernel needs at least one sample"));
    }
    let inv_m = 1.0 / m as f64;
    let n = jac.cols();
    let kernel = match prec {
        Preconditioner::Identity => {
            let mut k = jac.gram_rows();
            k.scale(inv_m);
            k
        }
        Preconditioner::AdamDiag(d) => {
            if d.len() != n {
                return Err(dim_err(format!("diagonal has length {}, expected {n}", d.len())));
            }
            if d.iter().any(|v| !(*v > 0.0)) {
                return Err(crate::Error::Singular("diagonal preconditioner has a non-positive entry".into()));
            }
            let mut scaled = jac.clone();
            let rs: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
            for r in 0..scaled.rows() {
                for (x, s) in scaled.row_mut(r).iter_mut().zip(&rs) {
                    *x *= s;
                }
            }
            let mut k = scaled.gram_rows();
            k.scale(inv_m);
            k
        }
        Preconditioner::GaussNewton { beta } => {
            if !(*beta > 0.0) {
                return Err(invalid("Gauss-Newton metric needs β > 0"));
            }
            if jac.rows() <= n {
                let mut theta = jac.gram_rows();
                theta.scale(inv_m);
                let mut shifted = theta.clone();
                shifted.add_diag(*beta);
                shifted.solve_matrix(&theta)?
            } else {
                let mut metric = jac.gram_cols();
                metric.scale(inv_m);
                metric.add_diag(*beta);
                let x = metric.solve_matrix(&jac.transpose())?;
                let mut k = jac.matmul(&x)?;
                k.scale(inv_m);
                k
            }
        }
    };
    KernelReport::from_kernel(kernel, prec.tag())
}

/// `Θ = (1/m) J Jᵀ` at `θ`.
pub fn empirical_ntk(obj: &dyn LeastSquares, theta: &[f64]) -> Result<KernelReport> {
    preconditioned_ntk(obj, theta, &Preconditioner::Identity)
}

/// `Θ^{(M)} = (1/m) J M⁻¹ Jᵀ` at `θ`, symmetrized before the eigensolve.
pub fn preconditioned_ntk(obj: &dyn LeastSquares, theta: &[f64], prec: &Preconditioner) -> Result<KernelReport> {
    if theta.len() != obj.dim() {
        return Err(dim_err("θ length differs from the objective dimension"));
    }
    kernel_from_jacobian(&obj.jacobian(theta), obj.num_samples(), prec)
}

/// `diag(√v̂ + ε)`: the per-coordinate scaling Adam applies at its current step.
pub fn adam_diag_preconditioner(state: &OptState, beta2: f64, eps: f64) -> Preconditioner {
    Preconditioner::AdamDiag(state.adam_v_hat(beta2).iter().map(|v| v.sqrt() + eps).collect())
}

/// Error dynamics `e_k = Σ c_i (1 − αλ_i)^k q_i` of the linearized model.
#[derive(Clone, Debug)]
pub struct ModeDecay {
    /// `c_i = q_iᵀ e₀`.
    pub coefficients: Vec<f64>,
    /// `1 − αλ_i`.
    pub factors: Vec<f64>,
    eigenvectors: Matrix,
}

impl ModeDecay {
    pub fn new(report: &KernelReport, e0: &[f64], alpha: f64) -> Result<Self> {
        let q = &report.eigen.eigenvectors;
        if e0.len() != q.rows() {
            return Err(dim_err(format!("e₀ has length {}, kernel is {}×{}", e0.len(), q.rows(), q.rows())));
        }
        Ok(Self {
            coefficients: q.tr_matvec(e0),
            factors: report.eigen.eigenvalues.iter().map(|l| 1.0 - alpha * l).collect(),
            eigenvectors: q.clone(),
        })
    }

    /// Predicted error vector after `k` steps.
    pub fn predict(&self, k: usize) -> Vec<f64> {
        let w: Vec<f64> = self
            .coefficients
            .iter()
            .zip(&self.factors)
            .map(|(c, f)| c * f.powi(k as i32))
            .collect();
        self.eigenvectors.matvec(&w)
    }

    /// `|c_i| |1 − αλ_i|^k` for every mode.
    pub fn mode_magnitudes(&self, k: usize) -> Vec<f64> {
        self.coefficients
            .iter()
            .zip(&self.factors)
            .map(|(c, f)| c.abs() * f.abs().powi(k as i32))
            .collect()
    }
}

/// `Q diag((1 − αλ_i)^k) Qᵀ e₀`.
pub fn mode_decay_predict(report: &KernelReport, e0: &[f64], alpha: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        if e0.len() != report.kernel.rows() {
            return Err(dim_err("e₀ length differs from the kernel size"));
        }
        return Ok(e0.to_vec());
    }
    Ok(ModeDecay::new(report, e0, alpha)?.predict(k))
}
