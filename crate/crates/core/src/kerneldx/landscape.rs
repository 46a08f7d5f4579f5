use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::fmt_real;
use crate::numkit::{axpy, dot, norm, RngStream};
use crate::problems::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeOptions {
    /// The grid spans `[−half_width, half_width]` on both axes.
    pub half_width: f64,
    /// Points per axis; odd so that the centre is a grid point.
    pub steps: usize,
    /// Rescale each parameter block of a direction to the norm of that block of `θ*`.
    #[serde(default = "yes")]
    pub filter_normalize: bool,
}

fn yes() -> bool {
    true
}

impl Default for LandscapeOptions {
    fn default() -> Self {
        Self { half_width: 1.0, steps: 41, filter_normalize: true }
    }
}

/// `f(θ* + a d₁ + b d₂)` on a square grid.
#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid {
    /// Axis coordinates, shared by `a` and `b`.
    pub coords: Vec<f64>,
    /// `values[i * steps + j] = f(a_i, b_j)`.
    pub values: Vec<f64>,
    pub directions: [Vec<f64>; 2],
}

impl LandscapeGrid {
    pub fn steps(&self) -> usize {
        self.coords.len()
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.steps() + j]
    }

    pub fn center(&self) -> f64 {
        let c = self.steps() / 2;
        self.value(c, c)
    }

    /// Second differences through the centre along each axis.
    pub fn axis_curvatures(&self) -> (f64, f64) {
        let c = self.steps() / 2;
        let h = self.coords[c + 1] - self.coords[c];
        let f0 = self.center();
        let ca = (self.value(c + 1, c) - 2.0 * f0 + self.value(c - 1, c)) / (h * h);
        let cb = (self.value(c, c + 1) - 2.0 * f0 + self.value(c, c - 1)) / (h * h);
        (ca, cb)
    }

    /// Ratio of the larger to the smaller axis curvature magnitude.
    pub fn anisotropy(&self) -> f64 {
        let (ca, cb) = self.axis_curvatures();
        let (hi, lo) = (ca.abs().max(cb.abs()), ca.abs().min(cb.abs()));
        hi / lo
    }

    /// `a,b,f`
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("a,b,f\n");
        for (i, a) in self.coords.iter().enumerate() {
            for (j, b) in self.coords.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", fmt_real(*a), fmt_real(*b), fmt_real(self.value(i, j)));
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }
}

/// Slice the objective around `theta_star` along two random directions.
///
/// Directions are Gaussian draws, orthonormalized, then (optionally)
/// rescaled block by block so each block has the norm of the matching
/// block of `θ*`. Grid points are evaluated in parallel; the result does not
/// depend on the thread count.
pub fn landscape_projection(
    obj: &dyn Objective,
    theta_star: &[f64],
    opts: &LandscapeOptions,
    blocks: &[Range<usize>],
    rng: &mut RngStream,
) -> Result<LandscapeGrid> {
    let n = theta_star.len();
    if n != obj.dim() {
        return Err(dim_err("θ* length differs from the objective dimension"));
    }
    if opts.steps < 3 || opts.steps % 2 == 0 {
        return Err(invalid(format!("grid needs an odd number of steps ≥ 3, got {}", opts.steps)));
    }
    if !(opts.half_width > 0.0 && opts.half_width.is_finite()) {
        return Err(invalid("half width must be positive"));
    }
    if n < 2 {
        return Err(invalid("need at least two parameters for a 2-D slice"));
    }
    if blocks.iter().any(|b| b.end > n) {
        return Err(dim_err("parameter block out of range"));
    }

    let mut d1: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
    let mut d2: Vec<f64> = (0..n).map(|_| rng.std_normal()).collect();
    let n1 = norm(&d1);
    d1.iter_mut().for_each(|v| *v /= n1);
    let proj = dot(&d1, &d2);
    axpy(-proj, &d1, &mut d2);
    let n2 = norm(&d2);
    d2.iter_mut().for_each(|v| *v /= n2);
    if opts.filter_normalize {
        for d in [&mut d1, &mut d2] {
            for b in blocks {
                let target = norm(&theta_star[b.clone()]);
                let cur = norm(&d[b.clone()]);
                if cur > 0.0 {
                    d[b.clone()].iter_mut().for_each(|v| *v *= target / cur);
                }
            }
        }
    }

    let s = opts.steps;
    let half = (s - 1) as f64;
    let coords: Vec<f64> = (0..s)
        .map(|i| opts.half_width * (2.0 * i as f64 - half) / half)
        .collect();
    let values: Vec<f64> = (0..s * s)
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (coords[idx / s], coords[idx % s]);
            let point: Vec<f64> = (0..n).map(|k| theta_star[k] + a * d1[k] + b * d2[k]).collect();
            obj.value(&point)
        })
        .collect();
    Ok(LandscapeGrid { coords, values, directions: [d1, d2] })
}
