//! One-dimensional probability metrics and the stochastic-dominance order.
//!
//! Every metric here is computed in closed form by walking the merged atom
//! (or quantile) partition of two finite-support measures, so the results
//! are exact up to floating-point rounding.

use serde::{Deserialize, Serialize};

use crate::bellman::ReturnDistributionFunction;
use crate::error::{Error, Result};
use crate::measures::{CategoricalDistribution, Measure};

/// Default slack for CDF comparisons in [`stochastically_dominates`].
pub const DOMINANCE_TOL: f64 = 1e-12;

/// Cumulative masses of a probability measure, with the last one pinned to 1.
fn quantile_table<M: Measure + ?Sized>(d: &M) -> (Vec<f64>, Vec<f64>) {
    let mut locs = Vec::with_capacity(d.n_atoms());
    let mut cum = Vec::with_capacity(d.n_atoms());
    let mut acc = 0.0;
    for (y, m) in d.atoms() {
        acc += m;
        locs.push(y);
        cum.push(acc);
    }
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    (locs, cum)
}

/// `d_p(a, b) = (int_0^1 |F_a^{-1}(u) - F_b^{-1}(u)|^p du)^{1/p}`.
pub fn wasserstein_p<A, B>(a: &A, b: &B, p: f64) -> Result<f64>
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::parameter("p", p, "Wasserstein order must be >= 1"));
    }
    let (xa, ca) = quantile_table(a);
    let (xb, cb) = quantile_table(b);
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut acc = 0.0;
    while i < xa.len() && j < xb.len() {
        let next = ca[i].min(cb[j]);
        let du = next - u;
        if du > 0.0 {
            acc += du * (xa[i] - xb[j]).abs().powf(p);
            u = next;
        }
        if ca[i] <= next {
            i += 1;
        }
        if cb[j] <= next {
            j += 1;
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// `ℓ2²(a, b) = int (F_a - F_b)^2`.
pub fn cramer_l2_squared<A, B>(a: &A, b: &B) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    let (na, nb) = (a.n_atoms(), b.n_atoms());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut acc = 0.0;
    while i < na || j < nb {
        let ya = if i < na { a.atom(i).0 } else { f64::INFINITY };
        let yb = if j < nb { b.atom(j).0 } else { f64::INFINITY };
        let x = ya.min(yb);
        while i < na && a.atom(i).0 == x {
            fa += a.atom(i).1;
            i += 1;
        }
        while j < nb && b.atom(j).0 == x {
            fb += b.atom(j).1;
            j += 1;
        }
        let ya = if i < na { a.atom(i).0 } else { f64::INFINITY };
        let yb = if j < nb { b.atom(j).0 } else { f64::INFINITY };
        let next = ya.min(yb);
        if next.is_finite() {
            let diff = fa - fb;
            acc += diff * diff * (next - x);
        }
    }
    acc
}

/// Cramér distance `ℓ2(a, b)`.
pub fn cramer_l2<A, B>(a: &A, b: &B) -> f64
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    cramer_l2_squared(a, b).sqrt()
}

/// Base metric for [`sup_metric`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    Cramer,
    Wasserstein(f64),
}

impl Metric {
    pub fn distance<A, B>(&self, a: &A, b: &B) -> Result<f64>
    where
        A: Measure + ?Sized,
        B: Measure + ?Sized,
    {
        match *self {
            Metric::Cramer => Ok(cramer_l2(a, b)),
            Metric::Wasserstein(p) => wasserstein_p(a, b, p),
        }
    }
}

/// `sup_{(x,a)} metric(eta^{(x,a)}, mu^{(x,a)})`.
pub fn sup_metric<A: Measure, B: Measure>(
    eta: &ReturnDistributionFunction<A>,
    mu: &ReturnDistributionFunction<B>,
    metric: Metric,
) -> Result<f64> {
    eta.check_same_shape(mu)?;
    let mut worst = 0.0_f64;
    for (d, e) in eta.iter().zip(mu.iter()) {
        worst = worst.max(metric.distance(d, e)?);
    }
    Ok(worst)
}

/// Supremum-Cramér distance `ℓ̄2`.
pub fn sup_cramer<A: Measure, B: Measure>(
    eta: &ReturnDistributionFunction<A>,
    mu: &ReturnDistributionFunction<B>,
) -> Result<f64> {
    sup_metric(eta, mu, Metric::Cramer)
}

/// `KL(target || model)` in nats, with `0 ln 0 = 0`.
///
/// Returns `f64::INFINITY` when `model` puts zero mass where `target` does
/// not; [`kl_support_violations`] names the offending grid indices.
pub fn kl_divergence(target: &CategoricalDistribution, model: &CategoricalDistribution) -> Result<f64> {
    if target.grid() != model.grid() {
        return Err(Error::GridMismatch);
    }
    let mut acc = 0.0;
    for (&p, &q) in target.probs().iter().zip(model.probs()) {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Ok(f64::INFINITY);
        }
        acc += p * (p / q).ln();
    }
    Ok(acc)
}

/// Grid indices where `target` has mass and `model` has none.
pub fn kl_support_violations(target: &CategoricalDistribution, model: &CategoricalDistribution) -> Vec<usize> {
    target
        .probs()
        .iter()
        .zip(model.probs())
        .enumerate()
        .filter(|(_, (&p, &q))| p > 0.0 && q == 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Whether `hi` stochastically dominates `lo`: `F_lo(x) >= F_hi(x) - tol`
/// at every atom location of either measure.
pub fn stochastically_dominates<A, B>(hi: &A, lo: &B, tol: f64) -> bool
where
    A: Measure + ?Sized,
    B: Measure + ?Sized,
{
    let (nh, nl) = (hi.n_atoms(), lo.n_atoms());
    let (mut i, mut j) = (0, 0);
    let (mut fh, mut fl) = (0.0, 0.0);
    while i < nh || j < nl {
        let yh = if i < nh { hi.atom(i).0 } else { f64::INFINITY };
        let yl = if j < nl { lo.atom(j).0 } else { f64::INFINITY };
        let x = yh.min(yl);
        while i < nh && hi.atom(i).0 == x {
            fh += hi.atom(i).1;
            i += 1;
        }
        while j < nl && lo.atom(j).0 == x {
            fl += lo.atom(j).1;
            j += 1;
        }
        if fl < fh - tol {
            return false;
        }
    }
    true
}

/// Element-wise dominance of return distribution functions.
pub fn dominates_elementwise<A: Measure, B: Measure>(
    hi: &ReturnDistributionFunction<A>,
    lo: &ReturnDistributionFunction<B>,
    tol: f64,
) -> Result<bool> {
    hi.check_same_shape(lo)?;
    Ok(hi
        .iter()
        .zip(lo.iter())
        .all(|(h, l)| stochastically_dominates(h, l, tol)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{pushforward_affine, FiniteDistribution, SupportGrid};

    fn fd(atoms: &[(f64, f64)]) -> FiniteDistribution {
        FiniteDistribution::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn wasserstein_examples() {
        let a = fd(&[(0.25, 1.0)]);
        let b = fd(&[(0.75, 1.0)]);
        assert!((wasserstein_p(&a, &b, 2.0).unwrap() - 0.5).abs() < 1e-15);

        let pa = fd(&[(0.0, 0.75), (1.0, 0.25)]);
        let pb = fd(&[(0.0, 0.25), (1.0, 0.75)]);
        let d = wasserstein_p(&pa, &pb, 2.0).unwrap();
        assert!((d - 2f64.powf(-0.5)).abs() < 1e-12);

        let nu = fd(&[(-1.0, 0.2), (0.3, 0.5), (2.0, 0.3)]);
        for p in [1.0, 2.0, 3.5] {
            assert_eq!(wasserstein_p(&nu, &nu, p).unwrap(), 0.0);
        }
    }

    #[test]
    fn wasserstein_rejects_small_order() {
        let a = fd(&[(0.0, 1.0)]);
        assert!(wasserstein_p(&a, &a, 0.5).is_err());
        assert!(wasserstein_p(&a, &a, f64::NAN).is_err());
    }

    #[test]
    fn wasserstein_one_is_cdf_area() {
        // d_1 equals the L1 distance between CDFs.
        let a = fd(&[(0.0, 0.3), (1.0, 0.7)]);
        let b = fd(&[(0.5, 0.6), (2.0, 0.4)]);
        // |F_a - F_b|: [0,0.5): 0.3, [0.5,1): 0.3, [1,2): 0.4
        let expected = 0.3 * 0.5 + 0.3 * 0.5 + 0.4 * 1.0;
        assert!((wasserstein_p(&a, &b, 1.0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn cramer_examples() {
        assert_eq!(cramer_l2(&fd(&[(0.0, 1.0)]), &fd(&[(1.0, 1.0)])), 1.0);
        let d = cramer_l2(&fd(&[(0.25, 1.0)]), &fd(&[(0.75, 1.0)]));
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);

        let a = pushforward_affine(&fd(&[(0.0, 1.0)]), 0.0, 0.25).unwrap();
        let b = pushforward_affine(&fd(&[(1.0, 1.0)]), 0.0, 0.25).unwrap();
        assert!((cramer_l2(&a, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_examples() {
        let g = SupportGrid::uniform(0.0, 1.0, 2).unwrap();
        let p = CategoricalDistribution::new(g.clone(), vec![0.3, 0.7]).unwrap();
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);

        let t = CategoricalDistribution::new(g.clone(), vec![1.0, 0.0]).unwrap();
        let m = CategoricalDistribution::new(g.clone(), vec![0.5, 0.5]).unwrap();
        assert!((kl_divergence(&t, &m).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);

        assert_eq!(kl_divergence(&m, &t).unwrap(), f64::INFINITY);
        assert_eq!(kl_support_violations(&m, &t), vec![1]);
        assert!(kl_support_violations(&t, &m).is_empty());
    }

    #[test]
    fn dominance_examples() {
        let d0 = fd(&[(0.0, 1.0)]);
        let d1 = fd(&[(1.0, 1.0)]);
        assert!(stochastically_dominates(&d1, &d0, DOMINANCE_TOL));
        assert!(!stochastically_dominates(&d0, &d1, DOMINANCE_TOL));

        let spread = fd(&[(0.0, 0.5), (2.0, 0.5)]);
        assert!(!stochastically_dominates(&spread, &d1, DOMINANCE_TOL));
        assert!(!stochastically_dominates(&d1, &spread, DOMINANCE_TOL));
        assert!(stochastically_dominates(&spread, &spread, 0.0));
    }
}
