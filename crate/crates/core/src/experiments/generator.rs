//! Random MDPs, grids and distributions for ensemble experiments.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::bellman::CategoricalRdf;
use crate::error::{Error, Result};
use crate::mdp::{KernelEntry, Mdp, Policy};
use crate::measures::{compensated_sum, CategoricalDistribution, FiniteDistribution, SupportGrid};
use crate::rng::{stream, Purpose};

/// A flat Dirichlet draw of length `n`.
pub fn dirichlet<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total = compensated_sum(w.iter().copied());
    w.into_iter().map(|x: f64| x / total).collect()
}

/// A random MDP whose `(x, a)` rows put Dirichlet weights on `branching`
/// uniformly drawn `(r, x')` pairs, with `r` from `reward_support`.
pub fn generate_random_mdp(
    n_states: usize,
    n_actions: usize,
    reward_support: &[f64],
    branching: usize,
    gamma: f64,
    seed: u64,
) -> Result<Mdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(Error::parameter(
            "n_states",
            n_states,
            "need at least one state and action",
        ));
    }
    if branching == 0 {
        return Err(Error::parameter("branching", branching, "must be at least 1"));
    }
    if reward_support.is_empty() || reward_support.iter().any(|r| !r.is_finite()) {
        return Err(Error::parameter(
            "reward_support",
            reward_support.len(),
            "need finite rewards",
        ));
    }
    let mut rng = stream(seed, Purpose::Generator);
    let kernel = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| {
                    let probs = dirichlet(branching, &mut rng);
                    probs
                        .into_iter()
                        .map(|p| {
                            let r = reward_support[rng.random_range(0..reward_support.len())];
                            KernelEntry::new(p, r, rng.random_range(0..n_states))
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Mdp::new(n_states, n_actions, gamma, kernel)
}

pub fn random_policy<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Policy {
    let rows = (0..n_states).map(|_| dirichlet(n_actions, rng)).collect();
    Policy::new(rows).expect("Dirichlet rows are distributions")
}

/// A grid of between `2` and `max_k` sorted points drawn from `[lo, hi]`.
pub fn random_grid<R: Rng + ?Sized>(lo: f64, hi: f64, max_k: usize, rng: &mut R) -> SupportGrid {
    let k = rng.random_range(2..=max_k.max(2));
    loop {
        let mut points: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
        points.sort_by(f64::total_cmp);
        if let Ok(g) = SupportGrid::new(points) {
            return g;
        }
    }
}

/// Dirichlet probabilities on `grid`, with roughly a third of entries zeroed
/// when `sparse` is set.
pub fn random_categorical<R: Rng + ?Sized>(grid: &SupportGrid, sparse: bool, rng: &mut R) -> CategoricalDistribution {
    let mut w: Vec<f64> = (0..grid.len()).map(|_| Exp1.sample(rng)).collect();
    if sparse {
        let keep = rng.random_range(0..w.len());
        for (i, x) in w.iter_mut().enumerate() {
            if i != keep && rng.random_bool(1.0 / 3.0) {
                *x = 0.0;
            }
        }
    }
    let total = compensated_sum(w.iter().copied());
    let probs = w.into_iter().map(|x| x / total).collect();
    CategoricalDistribution::new(grid.clone(), probs).expect("normalised weights")
}

/// Up to `max_atoms` atoms uniform on `[lo, hi]` with Dirichlet masses.
pub fn random_finite<R: Rng + ?Sized>(lo: f64, hi: f64, max_atoms: usize, rng: &mut R) -> FiniteDistribution {
    let n = rng.random_range(1..=max_atoms.max(1));
    let masses = dirichlet(n, rng);
    let atoms = masses.into_iter().map(|m| (rng.random_range(lo..=hi), m)).collect();
    FiniteDistribution::new(atoms).expect("Dirichlet masses sum to one")
}

pub fn random_categorical_rdf<R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    grid: &SupportGrid,
    rng: &mut R,
) -> CategoricalRdf {
    CategoricalRdf::from_fn(n_states, n_actions, |_, _| random_categorical(grid, true, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{validate, MdpFile};

    #[test]
    fn trivial_self_loop() {
        let mdp = generate_random_mdp(1, 1, &[0.0], 1, 0.5, 3).unwrap();
        assert_eq!(mdp.outcomes(0, 0), &[KernelEntry::new(1.0, 0.0, 0)]);
    }

    #[test]
    fn deterministic_and_valid() {
        let a = generate_random_mdp(3, 2, &[0.0, 1.0], 2, 0.5, 42).unwrap();
        let b = generate_random_mdp(3, 2, &[0.0, 1.0], 2, 0.5, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_random_mdp(3, 2, &[0.0, 1.0], 2, 0.5, 43).unwrap());
        for seed in 0..50 {
            let m = generate_random_mdp(4, 3, &[-1.0, 0.0, 2.5], 3, 0.9, seed).unwrap();
            assert!(validate(&MdpFile::from(&m)).is_empty());
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(generate_random_mdp(0, 1, &[0.0], 1, 0.5, 0).is_err());
        assert!(generate_random_mdp(1, 1, &[0.0], 0, 0.5, 0).is_err());
        assert!(generate_random_mdp(1, 1, &[], 1, 0.5, 0).is_err());
    }
}
