use crate::error::{invalid, Result};
use crate::numkit::RngStream;
use crate::problems::{CollocationSet, TermGroup};

/// Split `size` by `fractions` with largest-remainder rounding.
///
/// Floors first, then hands the leftover units to the largest fractional
/// parts (ties to the lower index). The counts always sum to `size`.
pub fn largest_remainder_counts(fractions: &[f64], size: usize) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * size as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &g in order.iter().take(size.saturating_sub(assigned)) {
        counts[g] += 1;
    }
    counts
}

/// A batch holding a prescribed fraction of each loss group
/// (interior, Dirichlet, Neumann, data), as flattened sample indices.
///
/// Points within a group are drawn without replacement.
pub fn stratified_batch(
    colloc: &CollocationSet,
    fractions: [f64; 4],
    size: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if fractions.iter().any(|f| !(*f >= 0.0) || !f.is_finite()) {
        return Err(invalid("group fractions must be finite and non-negative"));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(invalid(format!("group fractions sum to {total}, expected 1")));
    }
    let nonzero = fractions.iter().filter(|f| **f > 0.0).count();
    if size < nonzero {
        return Err(invalid(format!("batch of {size} cannot cover {nonzero} groups")));
    }
    let counts = largest_remainder_counts(&fractions, size);
    let mut batch = Vec::with_capacity(size);
    for (g, &count) in TermGroup::ALL.iter().zip(&counts) {
        if count == 0 {
            continue;
        }
        let range = colloc.group_range(*g);
        if count > range.len() {
            return Err(invalid(format!(
                "{} group has {} points, batch asks for {count}",
                g.name(),
                range.len()
            )));
        }
        let picks = rng.sample_without_replacement(range.len(), count)?;
        batch.extend(picks.into_iter().map(|j| range.start + j));
    }
    Ok(batch)
}

/// Cell of each point when the bounding interval of the first coordinate is
/// cut into `cells` equal pieces.
pub fn cell_assignment(points: &[Vec<f64>], cells: usize) -> Vec<usize> {
    let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let width = hi - lo;
    points
        .iter()
        .map(|p| {
            if width <= 0.0 {
                0
            } else {
                (((p[0] - lo) / width * cells as f64) as usize).min(cells - 1)
            }
        })
        .collect()
}

/// A batch spread over a coarse grid of equal cells.
///
/// Draws round-robin: each round visits the cells in a fresh random order and
/// takes one unused point from every cell that still has points and is below
/// `ceil(size / cells)`. With one cell this is a plain uniform draw without
/// replacement.
pub fn spatial_diverse_batch(
    points: &[Vec<f64>],
    size: usize,
    cells: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if cells == 0 {
        return Err(invalid("need at least one cell"));
    }
    if size > points.len() {
        return Err(invalid(format!("batch of {size} from {} points", points.len())));
    }
    if points.iter().any(|p| p.is_empty()) {
        return Err(invalid("points need at least one coordinate"));
    }
    if cells == 1 {
        return rng.sample_without_replacement(points.len(), size);
    }
    let assignment = cell_assignment(points, cells);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cells];
    for (i, c) in assignment.iter().enumerate() {
        members[*c].push(i);
    }
    for m in &mut members {
        rng.shuffle(m);
    }
    let cap = size.div_ceil(cells);
    let mut taken = vec![0usize; cells];
    let mut batch = Vec::with_capacity(size);
    let mut order: Vec<usize> = (0..cells).collect();
    while batch.len() < size {
        rng.shuffle(&mut order);
        let before = batch.len();
        for &c in &order {
            if batch.len() == size {
                break;
            }
            if taken[c] < cap && taken[c] < members[c].len() {
                batch.push(members[c][taken[c]]);
                taken[c] += 1;
            }
        }
        if batch.len() == before {
            return Err(invalid(format!(
                "populated cells hold at most {} points under the per-cell cap {cap}",
                before
            )));
        }
    }
    Ok(batch)
}
