use crate::error::{dim_err, invalid, Error, Result};
use crate::numkit::{dot, norm, sym_eigen, Matrix};
use crate::problems::Objective;

/// Largest parameter count accepted by the dense hypergradient.
pub const BILEVEL_MAX_DIM: usize = 200;
/// Gradient norm above which `θ*` is flagged as not stationary.
pub const STATIONARITY_TOL: f64 = 1e-6;

/// `Σ_i γ_i R_i(θ)` as a single-sample objective.
pub struct WeightedSum<'a> {
    pub terms: Vec<&'a dyn Objective>,
    pub gammas: Vec<f64>,
}

impl<'a> WeightedSum<'a> {
    pub fn new(terms: Vec<&'a dyn Objective>, gammas: Vec<f64>) -> Result<Self> {
        if terms.is_empty() || terms.len() != gammas.len() {
            return Err(dim_err("need one weight per inner term"));
        }
        let n = terms[0].dim();
        if terms.iter().any(|t| t.dim() != n) {
            return Err(dim_err("inner terms have different dimensions"));
        }
        Ok(Self { terms, gammas })
    }
}

impl Objective for WeightedSum<'_> {
    fn dim(&self) -> usize {
        self.terms[0].dim()
    }

    fn num_samples(&self) -> usize {
        1
    }

    fn sample_value(&self, _i: usize, theta: &[f64]) -> f64 {
        self.terms.iter().zip(&self.gammas).map(|(t, g)| g * t.value(theta)).sum()
    }

    fn sample_gradient(&self, _i: usize, theta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (t, g) in self.terms.iter().zip(&self.gammas) {
            for (o, v) in out.iter_mut().zip(t.gradient(theta)) {
                *o += g * v;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergradient {
    /// `∂C/∂γ_j` per inner term.
    pub grad: Vec<f64>,
    /// `‖∇_θ Σ γ_i R_i(θ*)‖`.
    pub inner_grad_norm: f64,
    /// False when `θ*` is not stationary; the result is then unreliable.
    pub stationary: bool,
}

/// Hessian of `obj` by central differences of its gradient, step
/// `1e-5 (1 + |θ_i|)` per coordinate, symmetrized.
pub fn fd_hessian(obj: &dyn Objective, theta: &[f64]) -> Matrix {
    let n = theta.len();
    let mut h = Matrix::zeros(n, n);
    let mut probe = theta.to_vec();
    for i in 0..n {
        let step = 1e-5 * (1.0 + theta[i].abs());
        probe[i] = theta[i] + step;
        let gp = obj.gradient(&probe);
        probe[i] = theta[i] - step;
        let gm = obj.gradient(&probe);
        probe[i] = theta[i];
        for k in 0..n {
            h[(k, i)] = (gp[k] - gm[k]) / (2.0 * step);
        }
    }
    h.symmetrized()
}

/// Implicit-function hypergradient `∂C/∂γ_j = −(∇C)ᵀ H⁻¹ ∇R_j` at an inner
/// optimum `θ*` of `Σ γ_i R_i`, with `H` its Hessian.
pub fn bilevel_hypergradient(
    inner: &[&dyn Objective],
    outer: &dyn Objective,
    theta_star: &[f64],
    gammas: &[f64],
) -> Result<Hypergradient> {
    let combined = WeightedSum::new(inner.to_vec(), gammas.to_vec())?;
    let n = combined.dim();
    if theta_star.len() != n || outer.dim() != n {
        return Err(dim_err("θ*, inner and outer dimensions differ"));
    }
    if n > BILEVEL_MAX_DIM {
        return Err(invalid(format!("dense hypergradient limited to {BILEVEL_MAX_DIM} parameters, got {n}")));
    }
    let inner_grad_norm = norm(&combined.gradient(theta_star));
    let h = fd_hessian(&combined, theta_star);
    let outer_grad = outer.gradient(theta_star);
    let x = h
        .solve(&outer_grad)
        .map_err(|e| Error::Singular(format!("inner Hessian at θ*: {e}")))?;
    let grad = inner.iter().map(|r| -dot(&x, &r.gradient(theta_star))).collect();
    Ok(Hypergradient { grad, inner_grad_norm, stationary: inner_grad_norm <= STATIONARITY_TOL })
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeylReport {
    /// Descending eigenvalues of `Θ_m`.
    pub before: Vec<f64>,
    /// Descending eigenvalues of `Θ_{m+1}`.
    pub after: Vec<f64>,
    /// Indices `i` with `λ_i(Θ_{m+1}) < (m/(m+1)) λ_i(Θ_m) − tol`.
    pub violations: Vec<usize>,
    /// `max_i ((m/(m+1)) λ_i(Θ_m) − λ_i(Θ_{m+1}))`.
    pub worst_gap: f64,
}

impl WeylReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Absolute tolerance of the Weyl check, scaled by `max(1, λ_max)`.
pub const WEYL_TOL: f64 = 1e-12;

/// Adds one point to an `m`-point kernel and checks the eigenvalue lower
/// bound that a PSD rank-one update guarantees.
///
/// `Θ_{m+1} = (m/(m+1)) Θ_m + (1/(m+1)) J Jᵀ`.
pub fn weyl_check(theta_m: &Matrix, m: usize, j_new: &[f64]) -> Result<(Matrix, WeylReport)> {
    if !theta_m.is_square() || theta_m.rows() != j_new.len() {
        return Err(dim_err("kernel and new Jacobian row disagree in size"));
    }
    let shrink = m as f64 / (m + 1) as f64;
    let mut next = theta_m.clone();
    next.scale(shrink);
    next.add_scaled(1.0 / (m + 1) as f64, &Matrix::outer(j_new, j_new))?;
    let next = next.symmetrized();
    let before = sym_eigen(&theta_m.symmetrized())?.eigenvalues;
    let after = sym_eigen(&next)?.eigenvalues;
    let tol = WEYL_TOL * before.first().copied().unwrap_or(0.0).abs().max(1.0);
    let mut violations = Vec::new();
    let mut worst_gap = f64::NEG_INFINITY;
    for (i, (b, a)) in before.iter().zip(&after).enumerate() {
        let gap = shrink * b - a;
        worst_gap = worst_gap.max(gap);
        if gap > tol {
            violations.push(i);
        }
    }
    Ok((next, WeylReport { before, after, violations, worst_gap }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::RngStream;
    use crate::problems::QuadraticObjective;
    use crate::secondorder::{lbfgs_run, LbfgsConfig};

    /// `Σ_k c_k (θ_k − a_k)² + q Σ_k θ_k⁴`
    struct Quartic {
        c: Vec<f64>,
        a: Vec<f64>,
        q: f64,
    }

    impl Objective for Quartic {
        fn dim(&self) -> usize {
            self.c.len()
        }
        fn num_samples(&self) -> usize {
            1
        }
        fn sample_value(&self, _i: usize, t: &[f64]) -> f64 {
            (0..t.len())
                .map(|k| self.c[k] * (t[k] - self.a[k]).powi(2) + self.q * t[k].powi(4))
                .sum()
        }
        fn sample_gradient(&self, _i: usize, t: &[f64]) -> Vec<f64> {
            (0..t.len())
                .map(|k| 2.0 * self.c[k] * (t[k] - self.a[k]) + 4.0 * self.q * t[k].powi(3))
                .collect()
        }
    }

    #[test]
    fn outer_independent_of_theta_gives_zero() {
        let r1 = QuadraticObjective::diagonal(&[1.0, 2.0], vec![1.0, 0.0]).unwrap();
        let r2 = QuadraticObjective::diagonal(&[3.0, 1.0], vec![0.0, 1.0]).unwrap();
        let c = QuadraticObjective::diagonal(&[0.0, 0.0], vec![0.0, 0.0]).unwrap();
        let hg = bilevel_hypergradient(&[&r1, &r2], &c, &[0.25, 1.0 / 3.0], &[1.0, 1.0]).unwrap();
        assert_eq!(hg.grad, vec![0.0, 0.0]);
        assert!(hg.stationary);
    }

    #[test]
    fn quadratic_inner_linear_outer_matches_closed_form() {
        // R_i = ½θᵀA_iθ − b_iᵀθ, θ*(γ) = (Σγ_iA_i)⁻¹ Σγ_ib_i, C = cᵀθ.
        let a1 = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let a2 = Matrix::from_rows(&[vec![1.0, -0.2], vec![-0.2, 3.0]]).unwrap();
        let (b1, b2) = (vec![1.0, -1.0], vec![0.5, 2.0]);
        let r1 = QuadraticObjective::new(a1.clone(), b1.clone()).unwrap();
        let r2 = QuadraticObjective::new(a2.clone(), b2.clone()).unwrap();
        let cvec = vec![0.7, -1.1];
        let outer = QuadraticObjective::diagonal(&[0.0, 0.0], cvec.iter().map(|v| -v).collect()).unwrap();
        let gam = [0.6, 1.4];
        let mut h = a1.clone();
        h.scale(gam[0]);
        h.add_scaled(gam[1], &a2).unwrap();
        let rhs: Vec<f64> = (0..2).map(|k| gam[0] * b1[k] + gam[1] * b2[k]).collect();
        let theta = h.solve(&rhs).unwrap();
        // dθ*/dγ_j = −H⁻¹ ∇R_j, so dC/dγ_j = −cᵀH⁻¹(A_jθ* − b_j).
        let x = h.solve(&cvec).unwrap();
        let g1: Vec<f64> = a1.matvec(&theta).iter().zip(&b1).map(|(p, q)| p - q).collect();
        let g2: Vec<f64> = a2.matvec(&theta).iter().zip(&b2).map(|(p, q)| p - q).collect();
        let want = [-dot(&x, &g1), -dot(&x, &g2)];
        let hg = bilevel_hypergradient(&[&r1, &r2], &outer, &theta, &gam).unwrap();
        for j in 0..2 {
            assert!((hg.grad[j] - want[j]).abs() <= 1e-8, "{:?} vs {want:?}", hg.grad);
        }
    }

    fn solve_inner(r1: &Quartic, r2: &Quartic, gam: [f64; 2]) -> Vec<f64> {
        let sum = WeightedSum::new(vec![r1, r2], gam.to_vec()).unwrap();
        let mut cfg = LbfgsConfig::new(500);
        cfg.grad_tol = 1e-12;
        lbfgs_run(&sum, &[0.0, 0.0], &cfg).unwrap().theta
    }

    #[test]
    fn matches_outer_finite_differences_with_resolved_inner() {
        let r1 = Quartic { c: vec![1.0, 0.5], a: vec![1.0, -0.5], q: 0.1 };
        let r2 = Quartic { c: vec![0.3, 2.0], a: vec![-1.0, 0.8], q: 0.05 };
        let target = vec![0.4, 0.1];
        let outer = QuadraticObjective::diagonal(&[1.0, 1.0], target.clone()).unwrap();
        let gam = [1.0, 0.8];
        let theta = solve_inner(&r1, &r2, gam);
        let hg = bilevel_hypergradient(&[&r1, &r2], &outer, &theta, &gam).unwrap();
        assert!(hg.stationary, "{}", hg.inner_grad_norm);
        for j in 0..2 {
            let h = 1e-4;
            let mut gp = gam;
            gp[j] += h;
            let mut gm = gam;
            gm[j] -= h;
            let fd = (outer.value(&solve_inner(&r1, &r2, gp)) - outer.value(&solve_inner(&r1, &r2, gm))) / (2.0 * h);
            let rel = (hg.grad[j] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel <= 1e-4, "term {j}: {} vs {fd}", hg.grad[j]);
        }
    }

    #[test]
    fn non_stationary_point_is_flagged() {
        let r1 = QuadraticObjective::diagonal(&[1.0], vec![1.0]).unwrap();
        let hg = bilevel_hypergradient(&[&r1], &r1, &[0.0], &[1.0]).unwrap();
        assert!(!hg.stationary);
    }

    #[test]
    fn singular_inner_hessian_is_an_error() {
        let r1 = QuadraticObjective::diagonal(&[1.0, 0.0], vec![0.0, 0.0]).unwrap();
        let c = QuadraticObjective::diagonal(&[1.0, 1.0], vec![0.0, 0.0]).unwrap();
        assert!(bilevel_hypergradient(&[&r1], &c, &[0.0, 0.0], &[1.0]).is_err());
    }

    #[test]
    fn zero_update_shrinks_the_spectrum_exactly() {
        let t = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let (_, rep) = weyl_check(&t, 4, &[0.0, 0.0]).unwrap();
        for (a, b) in rep.after.iter().zip(&rep.before) {
            assert!((a - 0.8 * b).abs() <= 1e-14);
        }
        assert!(rep.holds());
    }

    #[test]
    fn update_of_zero_kernel_is_rank_one() {
        let (next, rep) = weyl_check(&Matrix::zeros(3, 3), 3, &[1.0, 2.0, 2.0]).unwrap();
        assert!((rep.after[0] - 9.0 / 4.0).abs() <= 1e-14);
        assert!(rep.after[1].abs() <= 1e-14 && rep.after[2].abs() <= 1e-14);
        assert!((next[(1, 2)] - 1.0).abs() <= 1e-15);
    }

    #[test]
    fn random_updates_respect_the_bound() {
        let mut rng = RngStream::new(11);
        for _ in 0..200 {
            let n = 1 + rng.index(6);
            let rows: Vec<Vec<f64>> = (0..n + 2).map(|_| (0..n).map(|_| rng.std_normal()).collect()).collect();
            let theta = Matrix::from_rows(&rows).unwrap().gram_cols();
            let j: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
            let (_, rep) = weyl_check(&theta, 1 + rng.index(50), &j).unwrap();
            assert!(rep.holds(), "{rep:?}");
        }
    }
}
