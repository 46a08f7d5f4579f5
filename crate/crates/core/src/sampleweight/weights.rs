use std::fmt::Write as _;
use std::path::Path;

use crate::error::{dim_err, invalid, Result};
use crate::firstorder::fmt_real;
use crate::numkit::norm;
use crate::problems::{Objective, PinnModel, PinnObjective, TermGroup};

/// Smallest loss weight kept after a GradNorm step, before renormalization.
pub const GAMMA_FLOOR: f64 = 1e-8;

/// Power-law point weights `ξ_j = |r_j|^β / mean_k |r_k|^β`.
///
/// The weights average to one, so `Σ ξ = m`. All-zero residuals give
/// uniform weights.
pub fn residual_point_weights(residuals: &[f64], beta: f64) -> Result<Vec<f64>> {
    if residuals.is_empty() {
        return Err(invalid("no residuals"));
    }
    if !(beta > 0.0) {
        return Err(invalid("weight exponent must be positive"));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(invalid("residuals must be finite"));
    }
    let powered: Vec<f64> = residuals.iter().map(|r| r.abs().powf(beta)).collect();
    let mean = powered.iter().sum::<f64>() / powered.len() as f64;
    if mean == 0.0 {
        return Ok(vec![1.0; residuals.len()]);
    }
    Ok(powered.iter().map(|w| w / mean).collect())
}

/// `j,xi`
pub fn weights_csv_string(xi: &[f64]) -> String {
    let mut s = String::from("j,xi\n");
    for (j, w) in xi.iter().enumerate() {
        let _ = writeln!(s, "{j},{}", fmt_real(*w));
    }
    s
}

pub fn write_weights_csv(xi: &[f64], path: &Path) -> Result<()> {
    std::fs::write(path, weights_csv_string(xi))?;
    Ok(())
}

/// One GradNorm step from per-loss values and gradient norms.
///
/// With `G_i = γ_i ‖∇R_i‖`, `Ḡ = mean G`, `L̃_i = R_i / R_i(0)` and
/// `r_i = L̃_i / mean L̃`, the surrogate `Σ |G_i − Ḡ r_i^ζ|` is stepped in
/// `γ` with the targets `Ḡ r_i^ζ` held fixed, so its `γ_i`-derivative is
/// `sign(G_i − target_i) ‖∇R_i‖`. The result is floored at
/// [`GAMMA_FLOOR`] and rescaled to sum to the number of losses.
pub fn gradnorm_step(
    values: &[f64],
    grad_norms: &[f64],
    gammas: &[f64],
    initial: &[f64],
    zeta: f64,
    step: f64,
) -> Result<Vec<f64>> {
    let n = gammas.len();
    if n == 0 {
        return Err(invalid("no losses"));
    }
    if values.len() != n || grad_norms.len() != n || initial.len() != n {
        return Err(dim_err("GradNorm inputs have different lengths"));
    }
    if gammas.iter().any(|g| !(*g > 0.0)) {
        return Err(invalid("loss weights must be positive"));
    }
    if initial.iter().any(|l| !(*l > 0.0)) {
        return Err(invalid("initial losses must be positive"));
    }
    if !(step >= 0.0) || !zeta.is_finite() {
        return Err(invalid("GradNorm step and exponent must be finite, step ≥ 0"));
    }
    let g: Vec<f64> = gammas.iter().zip(grad_norms).map(|(a, b)| a * b).collect();
    let g_bar = g.iter().sum::<f64>() / n as f64;
    let ratios: Vec<f64> = values.iter().zip(initial).map(|(v, l0)| v / l0).collect();
    let ratio_mean = ratios.iter().sum::<f64>() / n as f64;
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let speed = if ratio_mean > 0.0 { ratios[i] / ratio_mean } else { 1.0 };
            let target = g_bar * speed.powf(zeta);
            let d = g[i] - target;
            let sign = if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 };
            (gammas[i] - step * sign * grad_norms[i]).max(GAMMA_FLOOR)
        })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v *= n as f64 / total);
    Ok(out)
}

/// [`gradnorm_step`] with values and gradients taken from per-loss objectives at `θ`.
pub fn gradnorm_update(
    losses: &[&dyn Objective],
    theta: &[f64],
    gammas: &[f64],
    initial: &[f64],
    zeta: f64,
    step: f64,
) -> Result<Vec<f64>> {
    if losses.len() != gammas.len() {
        return Err(dim_err("one loss weight per loss required"));
    }
    let (values, norms): (Vec<f64>, Vec<f64>) = losses
        .iter()
        .map(|l| {
            let (v, g) = l.value_and_gradient(theta);
            (v, norm(&g))
        })
        .unzip();
    gradnorm_step(&values, &norms, gammas, initial, zeta, step)
}

/// GradNorm over the non-empty loss groups of a PINN.
///
/// `initial` holds the group risks at the start of training (ignored for
/// empty groups). The new weights are installed in `obj` and returned;
/// empty groups keep their current weight.
pub fn pinn_gradnorm_update<P: PinnModel>(
    obj: &mut PinnObjective<P>,
    theta: &[f64],
    initial: [f64; 4],
    zeta: f64,
    step: f64,
) -> Result<[f64; 4]> {
    let current = obj.colloc().gammas;
    let active: Vec<usize> = (0..4)
        .filter(|&g| obj.colloc().group_len(TermGroup::ALL[g]) > 0)
        .collect();
    let mut values = Vec::new();
    let mut norms = Vec::new();
    for &g in &active {
        let (v, grad) = obj.group_risk(TermGroup::ALL[g], theta);
        values.push(v);
        norms.push(norm(&grad));
    }
    let gam: Vec<f64> = active.iter().map(|&g| current[g]).collect();
    let init: Vec<f64> = active.iter().map(|&g| initial[g]).collect();
    let next = gradnorm_step(&values, &norms, &gam, &init, zeta, step)?;
    let mut out = current;
    for (k, &g) in active.iter().enumerate() {
        out[g] = next[k];
    }
    obj.set_gammas(out)?;
    Ok(out)
}
