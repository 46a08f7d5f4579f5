use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{dim_err, Result};
use crate::firstorder::fmt_real;
use crate::problems::{LeastSquares, LeastSquaresObjective, Model};

/// A frequency band spanned by `sin 2πcx` and `cos 2πcx`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub name: &'static str,
    /// Cycles per unit length.
    pub cycles: f64,
}

/// The three components of the spectral-bias target.
pub const SPECTRAL_BANDS: [Band; 3] = [
    Band { name: "low", cycles: 1.0 },
    Band { name: "mid", cycles: 4.0 },
    Band { name: "high", cycles: 16.0 },
];

/// Norm of the least-squares projection of `v` onto a band, using discrete
/// inner products over the grid `xs`.
fn projected_norm(xs: &[f64], v: &[f64], band: &Band) -> f64 {
    let w = 2.0 * PI * band.cycles;
    let (mut ss, mut sc, mut cc, mut sv, mut cv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, vi) in xs.iter().zip(v) {
        let (s, c) = (w * x).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        sv += s * vi;
        cv += c * vi;
    }
    let det = ss * cc - sc * sc;
    if det.abs() <= 1e-12 * (ss * cc).max(f64::MIN_POSITIVE) {
        // Degenerate grid: one basis function only.
        let (g, b) = if ss >= cc { (ss, sv) } else { (cc, cv) };
        return if g > 0.0 { b.abs() / g.sqrt() } else { 0.0 };
    }
    let a = (cc * sv - sc * cv) / det;
    let b = (ss * cv - sc * sv) / det;
    (a * a * ss + 2.0 * a * b * sc + b * b * cc).max(0.0).sqrt()
}

/// `‖P_band e‖ / ‖P_band u‖` for every band, with `e = h − u` the fit error.
pub fn band_errors(xs: &[f64], error: &[f64], target: &[f64], bands: &[Band]) -> Result<Vec<f64>> {
    if xs.len() != error.len() || xs.len() != target.len() {
        return Err(dim_err("grid, error and target lengths differ"));
    }
    Ok(bands
        .iter()
        .map(|b| projected_norm(xs, error, b) / projected_norm(xs, target, b))
        .collect())
}

/// Per-band relative errors at a sequence of iterates.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBiasReport {
    pub bands: Vec<Band>,
    /// `(iteration, error per band)`.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl SpectralBiasReport {
    pub fn at(&self, k: usize) -> Option<&[f64]> {
        self.rows.iter().find(|r| r.0 == k).map(|r| r.1.as_slice())
    }

    /// `k,<band names…>`
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("k");
        for b in &self.bands {
            s.push(',');
            s.push_str(b.name);
        }
        s.push('\n');
        for (k, errs) in &self.rows {
            let _ = write!(s, "{k}");
            for e in errs {
                let _ = write!(s, ",{}", fmt_real(*e));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Band errors of a scalar 1-D regression fit at each `(k, θ_k)` snapshot.
pub fn spectral_bias_report<M: Model>(
    obj: &LeastSquaresObjective<M>,
    snapshots: &[(usize, Vec<f64>)],
    bands: &[Band],
) -> Result<SpectralBiasReport> {
    let data = obj.data();
    if data.d_in() != 1 || data.d_out() != 1 {
        return Err(dim_err("spectral-bias report needs scalar inputs and outputs"));
    }
    let xs: Vec<f64> = data.inputs().iter().map(|x| x[0]).collect();
    let u: Vec<f64> = data.targets().iter().map(|y| y[0]).collect();
    let rows = snapshots
        .iter()
        .map(|(k, theta)| Ok((*k, band_errors(&xs, &obj.residuals(theta), &u, bands)?)))
        .collect::<Result<_>>()?;
    Ok(SpectralBiasReport { bands: bands.to_vec(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{spectral_bias_grid, spectral_bias_target};

    #[test]
    fn zero_prediction_gives_unit_errors_and_exact_fit_gives_zero() {
        let xs = spectral_bias_grid();
        let u: Vec<f64> = xs.iter().map(|x| spectral_bias_target(*x)).collect();
        let neg: Vec<f64> = u.iter().map(|v| -v).collect();
        for e in band_errors(&xs, &neg, &u, &SPECTRAL_BANDS).unwrap() {
            assert!((e - 1.0).abs() <= 1e-12);
        }
        for e in band_errors(&xs, &vec![0.0; xs.len()], &u, &SPECTRAL_BANDS).unwrap() {
            assert!(e <= 1e-8);
        }
    }

    #[test]
    fn bands_are_separated_on_the_grid() {
        let xs = spectral_bias_grid();
        let u: Vec<f64> = xs.iter().map(|x| spectral_bias_target(*x)).collect();
        // Error living purely in the high band.
        let e: Vec<f64> = xs.iter().map(|x| 0.1 * (32.0 * PI * x).cos()).collect();
        let errs = band_errors(&xs, &e, &u, &SPECTRAL_BANDS).unwrap();
        assert!(errs[0] <= 1e-12 && errs[1] <= 1e-12);
        // ‖0.1 cos‖ / ‖0.2 sin‖ on a uniform periodic grid.
        assert!((errs[2] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn csv_header_names_bands() {
        let r = SpectralBiasReport { bands: SPECTRAL_BANDS.to_vec(), rows: vec![(100, vec![0.1, 0.2, 0.3])] };
        assert!(r.to_csv_string().starts_with("k,low,mid,high\n100,"));
        assert_eq!(r.at(100).unwrap()[2], 0.3);
    }
}
