use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted descending, eigenvectors stored as matching columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// `Q Λ Qᵀ`
    pub fn reconstruct(&self) -> Matrix {
        let n = self.dim();
        let q = &self.eigenvectors;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v: f64 = (0..n)
                    .map(|k| q[(i, k)] * self.eigenvalues[k] * q[(j, k)])
                    .sum();
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        a
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps until the largest off-diagonal entry is at most `1e-12 · ‖A‖_F`
/// (capped at 100 sweeps).
pub fn sym_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    a.check_symmetric()?;
    let n = a.rows();
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let target = 1e-12 * a.frobenius_norm();

    for _ in 0..MAX_SWEEPS {
        let off = max_off_diag(&m);
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                // Rotation annihilating m[p][q] (Golub & Van Loan, sym.schur2).
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag = m.diag();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut eigenvectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, dst)] = v[(r, src)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn max_off_diag(m: &Matrix) -> f64 {
    let n = m.rows();
    let mut off = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            off = off.max(m[(i, j)].abs());
        }
    }
    off
}

fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows();
    // M ← Jᵀ M J, applied as column then row updates.
    for k in 0..n {
        let mkp = m[(k, p)];
        let mkq = m[(k, q)];
        m[(k, p)] = c * mkp - s * mkq;
        m[(k, q)] = s * mkp + c * mkq;
    }
    for k in 0..n {
        let mpk = m[(p, k)];
        let mqk = m[(q, k)];
        m[(p, k)] = c * mpk - s * mqk;
        m[(q, k)] = s * mpk + c * mqk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = c * vkp - s * vkq;
        v[(k, q)] = s * vkp + c * vkq;
    }
}

/// `λmax / λmin`; fails when `λmin ≤ 1e-14 · λmax`.
pub fn condition_number(d: &EigenDecomposition) -> Result<f64> {
    let hi = d.lambda_max();
    let lo = d.lambda_min();
    if hi <= 0.0 || lo <= 1e-14 * hi {
        return Err(Error::Singular(format!(
            "λmin = {lo:.3e} relative to λmax = {hi:.3e}"
        )));
    }
    Ok(hi / lo)
}

/// Condition number over the numerically nonzero spectrum.
///
/// Eigenvalues at or below `rel_floor · λmax` are dropped. Returns the ratio
/// and the number of dropped modes.
pub fn condition_number_floored(eigenvalues: &[f64], rel_floor: f64) -> (f64, usize) {
    let hi = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > 0.0) {
        return (f64::INFINITY, eigenvalues.len());
    }
    let floor = rel_floor * hi;
    let kept: Vec<f64> = eigenvalues.iter().copied().filter(|&l| l > floor).collect();
    let lo = kept.iter().copied().fold(f64::INFINITY, f64::min);
    (hi / lo, eigenvalues.len() - kept.len())
}
