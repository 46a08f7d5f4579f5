use serde::Serialize;

use crate::numkit::max_abs;
use crate::problems::Objective;

/// Central-difference step for a coordinate with value `v`.
#[inline]
pub fn fd_step(v: f64) -> f64 {
    1e-5 * (1.0 + v.abs())
}

/// Component-wise central differences of a scalar function.
pub fn central_difference_gradient<F>(mut f: F, theta: &[f64]) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut t = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            let h = fd_step(theta[i]);
            t[i] = theta[i] + h;
            let fp = f(&t);
            t[i] = theta[i] - h;
            let fm = f(&t);
            t[i] = theta[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Pathway that produced the worst error, e.g. `gradient` or `sample 3`.
    pub worst_pathway: String,
    pub worst_coordinate: usize,
    pub checks: usize,
}

impl GradcheckReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            worst_pathway: String::new(),
            worst_coordinate: 0,
            checks: 0,
        }
    }

    fn absorb(&mut self, pathway: &str, analytic: &[f64], fd: &[f64]) {
        let scale = max_abs(analytic).max(max_abs(fd));
        // Coordinates far below the vector's scale are compared against a
        // fraction of that scale, so cancellation noise in tiny entries does
        // not dominate.
        let floor = (1e-4 * scale).max(1e-10);
        for (i, (a, b)) in analytic.iter().zip(fd).enumerate() {
            let rel = (a - b).abs() / a.abs().max(b.abs()).max(floor);
            self.checks += 1;
            if rel > self.max_rel_error || !rel.is_finite() {
                self.max_rel_error = if rel.is_finite() { rel } else { f64::INFINITY };
                self.worst_pathway = pathway.to_string();
                self.worst_coordinate = i;
            }
        }
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error <= tol
    }
}

/// Compares every analytic derivative pathway of `obj` with central
/// differences at `theta`: the full gradient, a few per-sample gradients,
/// and, for least-squares forms, the Jacobian rows of those samples.
pub fn gradcheck(obj: &dyn Objective, theta: &[f64]) -> GradcheckReport {
    let mut report = GradcheckReport::new();
    let g = obj.gradient(theta);
    let fd = central_difference_gradient(|t| obj.value(t), theta);
    report.absorb("gradient", &g, &fd);

    let m = obj.num_samples();
    let picks: Vec<usize> = if m <= 3 {
        (0..m).collect()
    } else {
        vec![0, m / 2, m - 1]
    };
    for &i in &picks {
        let gi = obj.sample_gradient(i, theta);
        let fdi = central_difference_gradient(|t| obj.sample_value(i, t), theta);
        report.absorb(&format!("sample {i}"), &gi, &fdi);
    }

    if let Some(ls) = obj.as_least_squares() {
        let jac = ls.jacobian(theta);
        let rows = jac.rows();
        let pick_rows: Vec<usize> = if rows <= 3 {
            (0..rows).collect()
        } else {
            vec![0, rows / 2, rows - 1]
        };
        for &r in &pick_rows {
            let fdr = central_difference_gradient(|t| ls.residuals(t)[r], theta);
            report.absorb(&format!("jacobian row {r}"), jac.row(r), &fdr);
        }
    }
    report
}
