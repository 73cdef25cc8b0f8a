//! Finite-support probability and signed measures on the real line.
//!
//! Three concrete representations share the [`Measure`] trait:
//!
//! - [`CategoricalDistribution`]: a probability vector over a fixed
//!   [`SupportGrid`] `z_1 < ... < z_K`.
//! - [`FiniteDistribution`]: an arbitrary finite mixture of Diracs, the shape
//!   of an unprojected Bellman target.
//! - [`SignedGridMeasure`]: grid weights that may be negative, used for the
//!   stochastic-approximation noise term.
//!
//! All values are `f64`. Constructors validate and never renormalise: a
//! probability vector whose mass is off by more than [`MASS_TOL`] is rejected.

use std::cmp::Ordering;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute tolerance on `|sum(mass) - 1|` for probability measures.
pub const MASS_TOL: f64 = 1e-12;

/// Default absolute tolerance for merging nearby atoms.
pub const COALESCE_TOL: f64 = 1e-12;

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn check_unit_mass(total: f64, what: &str) -> Result<()> {
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::InvalidDistribution(format!(
            "{what} masses sum to {total:.17}, not 1 (tolerance {MASS_TOL:e})"
        )));
    }
    Ok(())
}

/// Strictly increasing support locations `z_1 < ... < z_K` with `K >= 2`.
///
/// Cloning is cheap; the points are shared.
#[derive(Clone, Debug)]
pub struct SupportGrid {
    points: Arc<[f64]>,
}

impl PartialEq for SupportGrid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.points, &other.points) || self.points == other.points
    }
}

impl SupportGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(bad) = points.iter().find(|z| !z.is_finite()) {
            return Err(Error::InvalidGrid(format!("non-finite point {bad}")));
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1] - w[0] <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "points must be strictly increasing: z[{}] = {} >= z[{}] = {}",
                    i,
                    w[0],
                    i + 1,
                    w[1]
                )));
            }
        }
        Ok(SupportGrid { points: points.into() })
    }

    /// `k` equally spaced points from `lo` to `hi` inclusive.
    pub fn uniform(lo: f64, hi: f64, k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 points, got {k}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidGrid(format!("bad range [{lo}, {hi}]")));
        }
        let step = (hi - lo) / (k - 1) as f64;
        let mut points: Vec<f64> = (0..k).map(|i| lo + step * i as f64).collect();
        points[k - 1] = hi;
        Self::new(points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always `false`; grids hold at least two points.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn point(&self, i: usize) -> f64 {
        self.points[i]
    }

    pub fn min(&self) -> f64 {
        self.points[0]
    }

    pub fn max(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// `max_i (z_{i+1} - z_i)`.
    pub fn max_gap(&self) -> f64 {
        self.points.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Whether every location lies in `[z_1, z_K]`.
    pub fn covers<M: Measure + ?Sized>(&self, d: &M) -> bool {
        d.atoms()
            .filter(|&(_, m)| m != 0.0)
            .all(|(y, _)| y >= self.min() && y <= self.max())
    }
}

/// A finite-support measure on the real line, exposed as sorted atoms.
pub trait Measure {
    fn n_atoms(&self) -> usize;

    /// The `i`-th atom `(location, mass)`; locations strictly increase with `i`.
    fn atom(&self, i: usize) -> (f64, f64);

    fn atoms(&self) -> Atoms<'_, Self> {
        Atoms { measure: self, next: 0 }
    }

    fn total_mass(&self) -> f64 {
        compensated_sum(self.atoms().map(|(_, m)| m))
    }

    /// `F(x) = measure((-inf, x])`, right-continuous.
    fn cdf(&self, x: f64) -> f64 {
        compensated_sum(self.atoms().take_while(|&(y, _)| y <= x).map(|(_, m)| m))
    }

    fn mean(&self) -> f64 {
        compensated_sum(self.atoms().map(|(y, m)| y * m))
    }
}

pub struct Atoms<'a, M: ?Sized> {
    measure: &'a M,
    next: usize,
}

impl<M: Measure + ?Sized> Iterator for Atoms<'_, M> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next < self.measure.n_atoms() {
            let a = self.measure.atom(self.next);
            self.next += 1;
            Some(a)
        } else {
            None
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.measure.n_atoms() - self.next;
        (n, Some(n))
    }
}

impl<M: Measure + ?Sized> ExactSizeIterator for Atoms<'_, M> {}

/// `sum_i p_i δ_{z_i}` on a fixed grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDistribution {
    grid: SupportGrid,
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(grid: SupportGrid, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != grid.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} probabilities for a grid of {} points",
                probs.len(),
                grid.len()
            )));
        }
        if let Some((i, p)) = probs.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidDistribution(format!("probability {i} is {p}")));
        }
        check_unit_mass(compensated_sum(probs.iter().copied()), "categorical")?;
        Ok(CategoricalDistribution { grid, probs })
    }

    /// `δ_{z_index}`.
    pub fn dirac(grid: SupportGrid, index: usize) -> Result<Self> {
        if index >= grid.len() {
            return Err(Error::parameter(
                "index",
                index,
                format!("grid has {} points", grid.len()),
            ));
        }
        let mut probs = vec![0.0; grid.len()];
        probs[index] = 1.0;
        Ok(CategoricalDistribution { grid, probs })
    }

    pub fn uniform(grid: SupportGrid) -> Self {
        let k = grid.len();
        let probs = vec![1.0 / k as f64; k];
        CategoricalDistribution { grid, probs }
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    /// `F(z_i)` for every grid point.
    pub fn cumulative(&self) -> Vec<f64> {
        self.probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }

    /// `(1 - alpha) * self + alpha * other`.
    pub fn mix_with(&self, other: &CategoricalDistribution, alpha: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::parameter("alpha", alpha, "mixture weight must lie in [0, 1]"));
        }
        if alpha == 0.0 {
            return Ok(self.clone());
        }
        if alpha == 1.0 {
            return Ok(other.clone());
        }
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| (1.0 - alpha) * p + alpha * q)
            .collect();
        Self::new(self.grid.clone(), probs)
    }
}

impl Measure for CategoricalDistribution {
    fn n_atoms(&self) -> usize {
        self.probs.len()
    }

    fn atom(&self, i: usize) -> (f64, f64) {
        (self.grid.point(i), self.probs[i])
    }
}

/// A probability measure with finitely many atoms at arbitrary locations.
///
/// Stored canonically: locations strictly increasing, masses strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution {
    locations: Vec<f64>,
    masses: Vec<f64>,
}

impl FiniteDistribution {
    /// Builds from unsorted `(location, mass)` pairs. Exact duplicate
    /// locations are merged and zero-mass atoms dropped.
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        let mut buf = AtomBuffer::with_capacity(atoms.len());
        for (y, m) in atoms {
            if !y.is_finite() {
                return Err(Error::InvalidDistribution(format!("non-finite location {y}")));
            }
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDistribution(format!("mass {m} at {y}")));
            }
            buf.push(y, m);
        }
        buf.into_distribution(0.0)
    }

    pub fn dirac(location: f64) -> Result<Self> {
        Self::new(vec![(location, 1.0)])
    }

    /// Copies the atoms of any probability measure.
    pub fn from_measure<M: Measure + ?Sized>(d: &M) -> Result<Self> {
        Self::new(d.atoms().collect())
    }

    pub fn locations(&self) -> &[f64] {
        &self.locations
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn min_location(&self) -> f64 {
        self.locations[0]
    }

    pub fn max_location(&self) -> f64 {
        self.locations[self.locations.len() - 1]
    }

    /// Translation `y -> y + shift` of every atom.
    pub fn shifted(&self, shift: f64) -> Self {
        FiniteDistribution {
            locations: self.locations.iter().map(|y| y + shift).collect(),
            masses: self.masses.clone(),
        }
    }
}

impl Measure for FiniteDistribution {
    fn n_atoms(&self) -> usize {
        self.locations.len()
    }

    fn atom(&self, i: usize) -> (f64, f64) {
        (self.locations[i], self.masses[i])
    }
}

/// Grid-supported measure with possibly negative weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedGridMeasure {
    grid: SupportGrid,
    weights: Vec<f64>,
}

impl SignedGridMeasure {
    pub fn new(grid: SupportGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::InvalidDistribution(format!(
                "{} weights for a grid of {} points",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite signed weight".into()));
        }
        Ok(SignedGridMeasure { grid, weights })
    }

    pub fn zero(grid: SupportGrid) -> Self {
        let weights = vec![0.0; grid.len()];
        SignedGridMeasure { grid, weights }
    }

    /// `a - b` for two distributions on the same grid.
    pub fn difference(a: &CategoricalDistribution, b: &CategoricalDistribution) -> Result<Self> {
        if a.grid() != b.grid() {
            return Err(Error::GridMismatch);
        }
        let weights = a.probs().iter().zip(b.probs()).map(|(p, q)| p - q).collect();
        Ok(SignedGridMeasure {
            grid: a.grid().clone(),
            weights,
        })
    }

    pub fn grid(&self) -> &SupportGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn max_abs_weight(&self) -> f64 {
        self.weights.iter().fold(0.0, |m, w| m.max(w.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// `self += scale * (a - b)`.
    pub(crate) fn add_scaled_difference(
        &mut self,
        scale: f64,
        a: &CategoricalDistribution,
        b: &CategoricalDistribution,
    ) -> Result<()> {
        if a.grid() != &self.grid || b.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        for ((w, p), q) in self.weights.iter_mut().zip(a.probs()).zip(b.probs()) {
            *w += scale * (p - q);
        }
        Ok(())
    }
}

impl Measure for SignedGridMeasure {
    fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    fn atom(&self, i: usize) -> (f64, f64) {
        (self.grid.point(i), self.weights[i])
    }
}

/// Unsorted atom accumulator used to assemble mixtures and pushforwards.
#[derive(Debug, Default)]
pub(crate) struct AtomBuffer {
    atoms: Vec<(f64, f64)>,
}

impl AtomBuffer {
    pub(crate) fn with_capacity(n: usize) -> Self {
        AtomBuffer {
            atoms: Vec::with_capacity(n),
        }
    }

    pub(crate) fn push(&mut self, location: f64, mass: f64) {
        self.atoms.push((location, mass));
    }

    /// Appends `weight * (f_{r,gamma})_# d`.
    pub(crate) fn push_affine<M: Measure + ?Sized>(&mut self, d: &M, r: f64, gamma: f64, weight: f64) {
        for (y, m) in d.atoms() {
            self.atoms.push((r + gamma * y, weight * m));
        }
    }

    /// Sorts, drops zero masses, merges atoms within `tol`, checks unit mass.
    pub(crate) fn into_distribution(mut self, tol: f64) -> Result<FiniteDistribution> {
        self.atoms.retain(|&(_, m)| m > 0.0);
        self.atoms
            .sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let (locations, masses) = coalesce_sorted(&self.atoms, tol);
        check_unit_mass(compensated_sum(masses.iter().copied()), "finite distribution")?;
        Ok(FiniteDistribution { locations, masses })
    }
}

/// Single-linkage merge of sorted atoms: a chain of neighbours each within
/// `tol` of the previous one collapses to its mass-weighted location.
fn coalesce_sorted(atoms: &[(f64, f64)], tol: f64) -> (Vec<f64>, Vec<f64>) {
    let mut locations = Vec::with_capacity(atoms.len());
    let mut masses = Vec::with_capacity(atoms.len());
    let mut i = 0;
    while i < atoms.len() {
        let first = atoms[i].0;
        let mut last = first;
        let mut j = i + 1;
        while j < atoms.len() && atoms[j].0 - last <= tol {
            last = atoms[j].0;
            j += 1;
        }
        let group = &atoms[i..j];
        let mass = compensated_sum(group.iter().map(|a| a.1));
        let location = if last == first || mass <= 0.0 {
            first
        } else {
            first + compensated_sum(group.iter().map(|a| (a.0 - first) * a.1)) / mass
        };
        locations.push(location);
        masses.push(mass);
        i = j;
    }
    (locations, masses)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::parameter("gamma", gamma, "discount must lie in [0, 1)"));
    }
    Ok(())
}

/// `(f_{r,gamma})_# d`, the law of `r + gamma * Z` for `Z ~ d`.
pub fn pushforward_affine<M: Measure + ?Sized>(d: &M, r: f64, gamma: f64) -> Result<FiniteDistribution> {
    check_gamma(gamma)?;
    if !r.is_finite() {
        return Err(Error::parameter("r", r, "reward must be finite"));
    }
    let mut buf = AtomBuffer::with_capacity(d.n_atoms());
    buf.push_affine(d, r, gamma, 1.0);
    buf.into_distribution(COALESCE_TOL)
}

/// `sum_j weights[j] * dists[j]`.
pub fn mix<M: Measure>(weights: &[f64], dists: &[M]) -> Result<FiniteDistribution> {
    if weights.is_empty() || weights.len() != dists.len() {
        return Err(Error::parameter(
            "weights",
            weights.len(),
            format!("need a nonempty list matching {} distributions", dists.len()),
        ));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(Error::parameter("weights", w, "mixture weights must be nonnegative"));
    }
    let total = compensated_sum(weights.iter().copied());
    if (total - 1.0).abs() > MASS_TOL {
        return Err(Error::parameter("weights", total, "mixture weights must sum to 1"));
    }
    let mut buf = AtomBuffer::with_capacity(dists.iter().map(Measure::n_atoms).sum());
    for (w, d) in weights.iter().zip(dists) {
        buf.push_affine(d, 0.0, 1.0, *w);
    }
    buf.into_distribution(COALESCE_TOL)
}

/// Merges atoms whose locations are within `tol`; total mass is unchanged.
pub fn coalesce(d: &FiniteDistribution, tol: f64) -> FiniteDistribution {
    let atoms: Vec<(f64, f64)> = d.atoms().collect();
    let (locations, masses) = coalesce_sorted(&atoms, tol.max(0.0));
    FiniteDistribution { locations, masses }
}
