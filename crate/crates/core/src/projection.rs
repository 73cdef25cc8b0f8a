//! The Cramér projection onto a fixed support grid.
//!
//! Two independent routes are provided: the mass-splitting rule applied atom
//! by atom ([`project`]) and expectations of hat functions
//! ([`project_via_hats`]). They agree to rounding error.

use crate::bellman::ReturnDistributionFunction;
use crate::error::{Error, Result};
use crate::measures::{CategoricalDistribution, Measure, SupportGrid};

/// Where a single Dirac at `y` sends its mass: `(lower_index, lower_weight)`,
/// the remainder going to `lower_index + 1`. Clamped points report weight 1.
fn split(points: &[f64], y: f64) -> (usize, f64) {
    let k = points.len();
    if y <= points[0] {
        return (0, 1.0);
    }
    if y > points[k - 1] {
        return (k - 1, 1.0);
    }
    // first index with z_j >= y; z_{j-1} < y <= z_j
    let upper = points.partition_point(|&z| z < y);
    let lower = upper - 1;
    let (lo, hi) = (points[lower], points[upper]);
    (lower, (hi - y) / (hi - lo))
}

fn accumulate(points: &[f64], probs: &mut [f64], y: f64, mass: f64) {
    let (i, w) = split(points, y);
    if w == 1.0 {
        probs[i] += mass;
    } else if w == 0.0 {
        probs[i + 1] += mass;
    } else {
        probs[i] += w * mass;
        probs[i + 1] += (1.0 - w) * mass;
    }
}

/// `Π_C δ_y`.
pub fn project_dirac(grid: &SupportGrid, y: f64) -> CategoricalDistribution {
    let mut probs = vec![0.0; grid.len()];
    accumulate(grid.points(), &mut probs, y, 1.0);
    CategoricalDistribution::new(grid.clone(), probs).expect("a split Dirac has unit mass")
}

/// `Π_C d`, extended affinely over the atoms of `d`.
pub fn project<M: Measure + ?Sized>(grid: &SupportGrid, d: &M) -> Result<CategoricalDistribution> {
    let points = grid.points();
    let mut probs = vec![0.0; grid.len()];
    for (y, m) in d.atoms() {
        accumulate(points, &mut probs, y, m);
    }
    CategoricalDistribution::new(grid.clone(), probs)
}

/// The hat function centred on grid point `index` (0-based).
///
/// Piecewise linear between neighbouring grid points, with the first and last
/// hats extended as a plateau of height 1 beyond the ends of the grid.
pub fn hat_function(grid: &SupportGrid, index: usize, x: f64) -> Result<f64> {
    let k = grid.len();
    if index >= k {
        return Err(Error::parameter("index", index, format!("grid has {k} points")));
    }
    let z = grid.points();
    let zi = z[index];
    if index + 1 < k && x >= zi && x <= z[index + 1] {
        return Ok((z[index + 1] - x) / (z[index + 1] - zi));
    }
    if index > 0 && x >= z[index - 1] && x <= zi {
        return Ok((x - z[index - 1]) / (zi - z[index - 1]));
    }
    if index == 0 && x <= zi {
        return Ok(1.0);
    }
    if index == k - 1 && x >= zi {
        return Ok(1.0);
    }
    Ok(0.0)
}

/// `Π_C d = sum_i E_{w~d}[h_i(w)] δ_{z_i}`, evaluating every hat on every atom.
pub fn project_via_hats<M: Measure + ?Sized>(grid: &SupportGrid, d: &M) -> Result<CategoricalDistribution> {
    let probs = (0..grid.len())
        .map(|i| {
            d.atoms()
                .map(|(y, m)| hat_function(grid, i, y).map(|h| h * m))
                .sum::<Result<f64>>()
        })
        .collect::<Result<Vec<f64>>>()?;
    CategoricalDistribution::new(grid.clone(), probs)
}

/// Applies [`project`] to every entry of a return distribution function.
pub fn project_rdf<M: Measure>(
    grid: &SupportGrid,
    eta: &ReturnDistributionFunction<M>,
) -> Result<ReturnDistributionFunction<CategoricalDistribution>> {
    eta.try_map(|d| project(grid, d))
}
