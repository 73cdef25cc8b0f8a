//! Distributional Bellman operators and the solvers built on them.

use crate::error::{Error, Result};
use crate::mdp::{greedy_policy, Mdp, Policy, Transition};
use crate::measures::{
    pushforward_affine, AtomBuffer, CategoricalDistribution, FiniteDistribution, Measure, SignedGridMeasure,
    SupportGrid, COALESCE_TOL,
};
use crate::metrics::sup_cramer;
use crate::projection::{project, project_rdf};

/// A table of distributions indexed by `(x, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnDistributionFunction<D> {
    n_states: usize,
    n_actions: usize,
    rows: Vec<D>,
}

pub type CategoricalRdf = ReturnDistributionFunction<CategoricalDistribution>;
pub type FiniteRdf = ReturnDistributionFunction<FiniteDistribution>;

impl<D> ReturnDistributionFunction<D> {
    /// `rows[x * n_actions + a]` holds the entry for `(x, a)`.
    pub fn new(n_states: usize, n_actions: usize, rows: Vec<D>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || rows.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "{} rows for {n_states} states x {n_actions} actions",
                rows.len()
            )));
        }
        Ok(ReturnDistributionFunction {
            n_states,
            n_actions,
            rows,
        })
    }

    pub fn from_fn(n_states: usize, n_actions: usize, mut f: impl FnMut(usize, usize) -> D) -> Self {
        let rows = (0..n_states)
            .flat_map(|x| (0..n_actions).map(move |a| (x, a)))
            .map(|(x, a)| f(x, a))
            .collect();
        ReturnDistributionFunction {
            n_states,
            n_actions,
            rows,
        }
    }

    pub fn filled(n_states: usize, n_actions: usize, d: D) -> Self
    where
        D: Clone,
    {
        Self::from_fn(n_states, n_actions, |_, _| d.clone())
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, x: usize, a: usize) -> &D {
        &self.rows[x * self.n_actions + a]
    }

    pub fn set(&mut self, x: usize, a: usize, d: D) {
        self.rows[x * self.n_actions + a] = d;
    }

    /// Entries in `(x, a)` row-major order.
    pub fn iter(&self) -> std::slice::Iter<'_, D> {
        self.rows.iter()
    }

    pub fn rows(&self) -> &[D] {
        &self.rows
    }

    pub fn map<E>(&self, f: impl FnMut(&D) -> E) -> ReturnDistributionFunction<E> {
        ReturnDistributionFunction {
            n_states: self.n_states,
            n_actions: self.n_actions,
            rows: self.rows.iter().map(f).collect(),
        }
    }

    pub fn try_map<E>(&self, f: impl FnMut(&D) -> Result<E>) -> Result<ReturnDistributionFunction<E>> {
        Ok(ReturnDistributionFunction {
            n_states: self.n_states,
            n_actions: self.n_actions,
            rows: self.rows.iter().map(f).collect::<Result<_>>()?,
        })
    }

    pub fn check_same_shape<E>(&self, other: &ReturnDistributionFunction<E>) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }

    fn check_fits(&self, mdp: &Mdp) -> Result<()> {
        if self.n_states != mdp.n_states() || self.n_actions != mdp.n_actions() {
            return Err(Error::ShapeMismatch(format!(
                "return distribution function is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                mdp.n_states(),
                mdp.n_actions()
            )));
        }
        Ok(())
    }
}

impl<D: Measure> ReturnDistributionFunction<D> {
    /// Means of every entry, row-major.
    pub fn means(&self) -> Vec<f64> {
        self.rows.iter().map(Measure::mean).collect()
    }
}

impl CategoricalRdf {
    /// Every entry `δ_{z_index}`.
    pub fn dirac(n_states: usize, n_actions: usize, grid: &SupportGrid, index: usize) -> Result<Self> {
        let d = CategoricalDistribution::dirac(grid.clone(), index)?;
        Ok(Self::filled(n_states, n_actions, d))
    }
}

/// `(T^π η)^{(x,a)}`, exactly.
fn eval_row<M: Measure>(
    mdp: &Mdp,
    pi: &Policy,
    eta: &ReturnDistributionFunction<M>,
    x: usize,
    a: usize,
) -> Result<FiniteDistribution> {
    let gamma = mdp.gamma();
    let mut buf = AtomBuffer::default();
    for e in mdp.outcomes(x, a) {
        if e.p == 0.0 {
            continue;
        }
        for (a_next, &w) in pi.row(e.next).iter().enumerate() {
            if w > 0.0 {
                buf.push_affine(eta.get(e.next, a_next), e.r, gamma, e.p * w);
            }
        }
    }
    buf.into_distribution(COALESCE_TOL)
}

fn check_inputs<M>(mdp: &Mdp, pi: &Policy, eta: &ReturnDistributionFunction<M>) -> Result<()> {
    mdp.check_policy(pi)?;
    eta.check_fits(mdp)
}

/// The distributional Bellman evaluation operator `T^π`, computed exactly.
pub fn bellman_eval<M: Measure>(mdp: &Mdp, pi: &Policy, eta: &ReturnDistributionFunction<M>) -> Result<FiniteRdf> {
    check_inputs(mdp, pi, eta)?;
    let rows = (0..mdp.n_states())
        .flat_map(|x| (0..mdp.n_actions()).map(move |a| (x, a)))
        .map(|(x, a)| eval_row(mdp, pi, eta, x, a))
        .collect::<Result<Vec<_>>>()?;
    ReturnDistributionFunction::new(mdp.n_states(), mdp.n_actions(), rows)
}

/// The control operator: [`bellman_eval`] under the greedy policy of `eta`.
pub fn bellman_control<M: Measure>(mdp: &Mdp, eta: &ReturnDistributionFunction<M>) -> Result<FiniteRdf> {
    eta.check_fits(mdp)?;
    bellman_eval(mdp, &greedy_policy(eta), eta)
}

/// `Π_C T^π η`.
pub fn projected_bellman_eval<M: Measure>(
    mdp: &Mdp,
    pi: &Policy,
    grid: &SupportGrid,
    eta: &ReturnDistributionFunction<M>,
) -> Result<CategoricalRdf> {
    project_rdf(grid, &bellman_eval(mdp, pi, eta)?)
}

/// `Π_C T η` with the greedy control operator.
pub fn projected_bellman_control<M: Measure>(
    mdp: &Mdp,
    grid: &SupportGrid,
    eta: &ReturnDistributionFunction<M>,
) -> Result<CategoricalRdf> {
    project_rdf(grid, &bellman_control(mdp, eta)?)
}

/// `(f_{r,γ})_# η^{(x', a')}` for a sampled transition with its bootstrap action.
pub fn stochastic_target<M: Measure>(
    gamma: f64,
    transition: &Transition,
    eta: &ReturnDistributionFunction<M>,
) -> Result<FiniteDistribution> {
    let a_next = transition
        .a_next
        .ok_or_else(|| Error::parameter("a_next", "none", "bootstrap action must be chosen"))?;
    if transition.x_next >= eta.n_states() || a_next >= eta.n_actions() {
        return Err(Error::parameter(
            "transition",
            format!("({}, {a_next})", transition.x_next),
            "next pair out of range",
        ));
    }
    pushforward_affine(eta.get(transition.x_next, a_next), transition.r, gamma)
}

/// Which operator [`fixed_point`] iterates.
#[derive(Clone, Copy, Debug)]
pub enum Operator<'a> {
    Evaluation(&'a Policy),
    Control,
}

impl Operator<'_> {
    /// One application of the projected operator.
    pub fn apply(&self, mdp: &Mdp, grid: &SupportGrid, eta: &CategoricalRdf) -> Result<CategoricalRdf> {
        match self {
            Operator::Evaluation(pi) => projected_bellman_eval(mdp, pi, grid, eta),
            Operator::Control => projected_bellman_control(mdp, grid, eta),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FixedPoint {
    pub eta: CategoricalRdf,
    pub iterations: usize,
    /// `ℓ̄2` between the last two iterates.
    pub residual: f64,
}

/// Iterates the projected operator from `eta0` until consecutive iterates are
/// within `tol` in `ℓ̄2`.
pub fn fixed_point(
    mdp: &Mdp,
    op: Operator<'_>,
    grid: &SupportGrid,
    eta0: CategoricalRdf,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::parameter("tol", tol, "tolerance must be positive"));
    }
    let mut eta = eta0;
    let mut residual = f64::INFINITY;
    for iterations in 1..=max_iter {
        let next = op.apply(mdp, grid, &eta)?;
        residual = sup_cramer(&next, &eta)?;
        eta = next;
        if residual <= tol {
            return Ok(FixedPoint {
                eta,
                iterations,
                residual,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual,
    })
}

/// Default cap on atoms per distribution in [`true_return_oracle`].
pub const ORACLE_ATOM_CAP: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct ReturnOracle {
    pub eta: FiniteRdf,
    /// Number of unprojected operator applications.
    pub horizon: usize,
    /// Bound on `sup d_1(η̂, η_π)`.
    pub error_bound: f64,
}

/// Approximates `η_π` by applying the exact operator to `δ_0` until the
/// Wasserstein-1 tail bound `γ^m max|r| / (1 - γ)` drops to `tol`.
pub fn true_return_oracle(mdp: &Mdp, pi: &Policy, tol: f64, atom_cap: usize) -> Result<ReturnOracle> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::parameter("tol", tol, "tolerance must be positive"));
    }
    mdp.check_policy(pi)?;
    let gamma = mdp.gamma();
    let scale = mdp.max_abs_reward() / (1.0 - gamma);
    let zero = FiniteDistribution::dirac(0.0)?;
    let mut eta = ReturnDistributionFunction::filled(mdp.n_states(), mdp.n_actions(), zero);
    let mut horizon = 0;
    let mut bound = scale;
    while bound > tol {
        let raw: usize = (0..mdp.n_states())
            .flat_map(|x| (0..mdp.n_actions()).map(move |a| (x, a)))
            .map(|(x, a)| {
                mdp.outcomes(x, a)
                    .iter()
                    .map(|e| {
                        (0..mdp.n_actions())
                            .filter(|&b| pi.prob(e.next, b) > 0.0)
                            .map(|b| eta.get(e.next, b).len())
                            .sum::<usize>()
                    })
                    .sum::<usize>()
            })
            .max()
            .unwrap_or(0);
        if raw > atom_cap.saturating_mul(64) {
            return Err(Error::OracleInfeasible {
                atoms: raw,
                cap: atom_cap,
                step: horizon + 1,
            });
        }
        eta = bellman_eval(mdp, pi, &eta)?;
        horizon += 1;
        if let Some(atoms) = eta.iter().map(FiniteDistribution::len).max().filter(|&n| n > atom_cap) {
            return Err(Error::OracleInfeasible {
                atoms,
                cap: atom_cap,
                step: horizon,
            });
        }
        bound = gamma.powi(horizon as i32) * scale;
    }
    Ok(ReturnOracle {
        eta,
        horizon,
        error_bound: bound,
    })
}

#[derive(Clone, Debug)]
pub struct Sandwich {
    /// `U_0, ..., U_k`, starting from `δ_{z_K}` everywhere.
    pub upper: Vec<CategoricalRdf>,
    /// `L_0, ..., L_k`, starting from `δ_{z_1}` everywhere.
    pub lower: Vec<CategoricalRdf>,
}

/// Averaged iterates `S_{k+1} = ½ S_k + ½ Π_C T^π S_k` from both grid ends.
pub fn sandwich_sequences(mdp: &Mdp, pi: &Policy, grid: &SupportGrid, k_max: usize) -> Result<Sandwich> {
    let (n_s, n_a) = (mdp.n_states(), mdp.n_actions());
    let run = |start: CategoricalRdf| -> Result<Vec<CategoricalRdf>> {
        let mut seq = Vec::with_capacity(k_max + 1);
        seq.push(start);
        for k in 0..k_max {
            let cur = &seq[k];
            let image = projected_bellman_eval(mdp, pi, grid, cur)?;
            let rows = cur
                .iter()
                .zip(image.iter())
                .map(|(c, t)| c.mix_with(t, 0.5))
                .collect::<Result<Vec<_>>>()?;
            seq.push(ReturnDistributionFunction::new(n_s, n_a, rows)?);
        }
        Ok(seq)
    };
    Ok(Sandwich {
        upper: run(CategoricalRdf::dirac(n_s, n_a, grid, grid.len() - 1)?)?,
        lower: run(CategoricalRdf::dirac(n_s, n_a, grid, 0)?)?,
    })
}

/// `Π_C (f_{r,γ})_# η^{(x',a')} - (Π_C T^π η)^{(x,a)}` for one transition.
pub fn sample_noise(
    mdp: &Mdp,
    pi: &Policy,
    grid: &SupportGrid,
    eta: &CategoricalRdf,
    transition: &Transition,
) -> Result<SignedGridMeasure> {
    check_inputs(mdp, pi, eta)?;
    mdp.check_pair(transition.x, transition.a)?;
    let mean = project(grid, &eval_row(mdp, pi, eta, transition.x, transition.a)?)?;
    let target = project(grid, &stochastic_target(mdp.gamma(), transition, eta)?)?;
    SignedGridMeasure::difference(&target, &mean)
}

/// Expectation of [`sample_noise`] at `(x, a)`, enumerating the kernel and policy.
pub fn noise_expectation(
    mdp: &Mdp,
    pi: &Policy,
    grid: &SupportGrid,
    eta: &CategoricalRdf,
    x: usize,
    a: usize,
) -> Result<SignedGridMeasure> {
    check_inputs(mdp, pi, eta)?;
    mdp.check_pair(x, a)?;
    let mean = project(grid, &eval_row(mdp, pi, eta, x, a)?)?;
    let mut acc = SignedGridMeasure::zero(grid.clone());
    for e in mdp.outcomes(x, a) {
        for (a_next, &w) in pi.row(e.next).iter().enumerate() {
            if e.p * w == 0.0 {
                continue;
            }
            let target = project(grid, &pushforward_affine(eta.get(e.next, a_next), e.r, mdp.gamma())?)?;
            acc.add_scaled_difference(e.p * w, &target, &mean)?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::catalog;

    fn grid(points: &[f64]) -> SupportGrid {
        SupportGrid::new(points.to_vec()).unwrap()
    }

    fn fd(y: f64) -> FiniteDistribution {
        FiniteDistribution::dirac(y).unwrap()
    }

    fn one_action() -> Policy {
        Policy::uniform(2, 1)
    }

    #[test]
    fn eval_on_chain() {
        let mdp = catalog::chain();
        let eta = FiniteRdf::filled(2, 1, fd(0.0));
        let out = bellman_eval(&mdp, &one_action(), &eta).unwrap();
        assert_eq!(out.get(0, 0), &fd(0.0));
        assert_eq!(out.get(1, 0), &fd(1.0));

        let eta_pi = FiniteRdf::new(2, 1, vec![fd(1.0), fd(2.0)]).unwrap();
        assert_eq!(bellman_eval(&mdp, &one_action(), &eta_pi).unwrap(), eta_pi);
    }

    #[test]
    fn zero_discount_gives_immediate_rewards() {
        let mdp = catalog::coin_flip().with_gamma(0.0).unwrap();
        let eta = FiniteRdf::filled(2, 1, fd(17.0));
        let out = bellman_eval(&mdp, &one_action(), &eta).unwrap();
        for d in out.iter() {
            assert_eq!(d.locations(), &[0.0, 1.0]);
            assert_eq!(d.masses(), &[0.5, 0.5]);
        }
    }

    #[test]
    fn control_tie_breaks_low_and_follows_means() {
        let mdp = catalog::bandit();
        let eta = FiniteRdf::filled(1, 2, fd(0.0));
        // tie: both targets bootstrap through a0 with mean 0
        let out = bellman_control(&mdp, &eta).unwrap();
        assert_eq!(out.get(0, 0), &fd(0.0));
        assert_eq!(out.get(0, 1), &fd(1.0));

        let eta = FiniteRdf::new(1, 2, vec![fd(0.0), fd(1.0)]).unwrap();
        let out = bellman_control(&mdp, &eta).unwrap();
        assert_eq!(out.get(0, 0), &fd(0.5));
        assert_eq!(out.get(0, 1), &fd(1.5));
    }

    #[test]
    fn control_matches_eval_with_one_action() {
        let mdp = catalog::coin_flip();
        let eta = FiniteRdf::new(2, 1, vec![fd(0.3), fd(1.1)]).unwrap();
        assert_eq!(
            bellman_control(&mdp, &eta).unwrap(),
            bellman_eval(&mdp, &one_action(), &eta).unwrap()
        );
    }

    #[test]
    fn projected_eval_on_chain() {
        let mdp = catalog::chain();
        let g3 = grid(&[0.0, 1.0, 2.0]);
        let eta = CategoricalRdf::dirac(2, 1, &g3, 0).unwrap();
        let out = projected_bellman_eval(&mdp, &one_action(), &g3, &eta).unwrap();
        assert_eq!(out.get(0, 0).probs(), &[1.0, 0.0, 0.0]);
        assert_eq!(out.get(1, 0).probs(), &[0.0, 1.0, 0.0]);

        let g2 = grid(&[0.0, 2.0]);
        let eta = CategoricalRdf::dirac(2, 1, &g2, 0).unwrap();
        let out = projected_bellman_eval(&mdp, &one_action(), &g2, &eta).unwrap();
        assert_eq!(out.get(0, 0).probs(), &[1.0, 0.0]);
        assert_eq!(out.get(1, 0).probs(), &[0.5, 0.5]);
    }

    #[test]
    fn stochastic_target_examples() {
        let eta = FiniteRdf::new(2, 1, vec![fd(1.0), fd(2.0)]).unwrap();
        let tr = |r, a_next| Transition {
            x: 0,
            a: 0,
            r,
            x_next: 1,
            a_next,
        };
        assert_eq!(stochastic_target(0.5, &tr(0.0, Some(0)), &eta).unwrap(), fd(1.0));
        assert_eq!(stochastic_target(0.5, &tr(1.0, Some(0)), &eta).unwrap(), fd(2.0));
        assert_eq!(stochastic_target(0.0, &tr(0.7, Some(0)), &eta).unwrap(), fd(0.7));
        assert!(stochastic_target(0.5, &tr(0.0, None), &eta).is_err());
        assert!(stochastic_target(0.5, &tr(0.0, Some(1)), &eta).is_err());
    }

    #[test]
    fn fixed_point_on_chain_grid_three() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 1.0, 2.0]);
        let eta0 = CategoricalRdf::dirac(2, 1, &g, 0).unwrap();
        let fp = fixed_point(
            &mdp,
            Operator::Evaluation(&one_action()),
            &g,
            eta0.clone(),
            1e-10,
            10_000,
        )
        .unwrap();
        let exact = FiniteRdf::new(2, 1, vec![fd(1.0), fd(2.0)]).unwrap();
        assert!(sup_cramer(&fp.eta, &exact).unwrap() <= 1e-10);
        assert!(fp.residual <= 1e-10);

        // consecutive residuals shrink by √γ per step from the distance to the
        // fixed point, so the count stays within the geometric envelope
        let gamma: f64 = 0.5;
        let d0 = sup_cramer(&eta0, &exact).unwrap();
        let envelope = ((1e-10 / ((1.0 + gamma.sqrt()) * d0)).ln() / gamma.sqrt().ln()).ceil() + 1.0;
        assert!(fp.iterations as f64 <= envelope, "{} > {envelope}", fp.iterations);
    }

    #[test]
    fn fixed_point_on_coarse_grid_differs_from_true_return() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 2.0]);
        let eta0 = CategoricalRdf::dirac(2, 1, &g, 0).unwrap();
        let fp = fixed_point(&mdp, Operator::Evaluation(&one_action()), &g, eta0, 1e-12, 10_000).unwrap();
        // s1 pays 1 forever and sits at δ_2; s0 sees δ_1, split onto {0, 2}
        let s0 = fp.eta.get(0, 0);
        assert!((s0.probs()[0] - 0.5).abs() < 1e-12);
        assert!((s0.mean() - 1.0).abs() < 1e-12);
        assert!((fp.eta.get(1, 0).probs()[1] - 1.0).abs() < 1e-12);

        let exact = FiniteRdf::new(2, 1, vec![fd(1.0), fd(2.0)]).unwrap();
        let err = sup_cramer(&fp.eta, &exact).unwrap();
        assert!(err > 0.0);
        assert!(err * err <= 2.0 * 2.0);
    }

    #[test]
    fn fixed_point_reports_non_convergence() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 1.0, 2.0]);
        let eta0 = CategoricalRdf::dirac(2, 1, &g, 0).unwrap();
        let err = fixed_point(&mdp, Operator::Evaluation(&one_action()), &g, eta0.clone(), 1e-10, 3);
        assert!(matches!(err, Err(Error::NotConverged { iterations: 3, .. })));
        assert!(fixed_point(&mdp, Operator::Control, &g, eta0, 0.0, 3).is_err());
    }

    #[test]
    fn oracle_on_chain() {
        let mdp = catalog::chain();
        let o = true_return_oracle(&mdp, &one_action(), 1e-8, ORACLE_ATOM_CAP).unwrap();
        assert!(o.error_bound <= 1e-8);
        assert_eq!(o.eta.get(0, 0).len(), 1);
        assert!((o.eta.get(0, 0).locations()[0] - 1.0).abs() <= 1e-8);
        assert!((o.eta.get(1, 0).locations()[0] - 2.0).abs() <= 1e-8);
    }

    #[test]
    fn oracle_with_zero_discount_is_exact_after_one_step() {
        let mdp = catalog::coin_flip().with_gamma(0.0).unwrap();
        let o = true_return_oracle(&mdp, &one_action(), 1e-9, ORACLE_ATOM_CAP).unwrap();
        assert_eq!(o.horizon, 1);
        assert_eq!(o.error_bound, 0.0);
        assert_eq!(o.eta.get(0, 0).masses(), &[0.5, 0.5]);
    }

    #[test]
    fn oracle_means_match_value_iteration() {
        let mdp = catalog::coin_flip();
        let pi = one_action();
        let o = true_return_oracle(&mdp, &pi, 1e-3, ORACLE_ATOM_CAP).unwrap();
        assert_eq!(o.horizon, 11);
        let q = crate::mdp::policy_q_values(&mdp, &pi, 1e-13).unwrap();
        // truncated mean is short by at most γ^m max|r| / (1 - γ)
        for (m, v) in o.eta.means().iter().zip(q.values()) {
            assert!((m - v).abs() <= o.error_bound + 1e-12, "{m} vs {v}");
        }
    }

    #[test]
    fn oracle_cap_is_enforced() {
        let mdp = catalog::coin_flip().with_gamma(0.9).unwrap();
        let err = true_return_oracle(&mdp, &one_action(), 1e-9, 50).unwrap_err();
        assert!(matches!(err, Error::OracleInfeasible { cap: 50, .. }));
    }

    #[test]
    fn sandwich_starts_at_grid_ends() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 1.0, 2.0]);
        let s = sandwich_sequences(&mdp, &one_action(), &g, 0).unwrap();
        assert_eq!(s.upper.len(), 1);
        assert!(s.upper[0].iter().all(|d| d.probs() == [0.0, 0.0, 1.0]));
        assert!(s.lower[0].iter().all(|d| d.probs() == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn noise_vanishes_on_deterministic_mdp() {
        let mdp = catalog::chain();
        let g = grid(&[0.0, 0.5, 2.0]);
        let eta = CategoricalRdf::filled(
            2,
            1,
            CategoricalDistribution::new(g.clone(), vec![0.2, 0.3, 0.5]).unwrap(),
        );
        for x in 0..2 {
            assert!(noise_expectation(&mdp, &one_action(), &g, &eta, x, 0)
                .unwrap()
                .is_zero());
        }
    }

    #[test]
    fn single_sample_noise_has_zero_mass() {
        let mdp = catalog::coin_flip();
        let g = grid(&[0.0, 1.0, 2.0]);
        let eta = CategoricalRdf::filled(2, 1, CategoricalDistribution::uniform(g.clone()));
        let tr = Transition {
            x: 0,
            a: 0,
            r: 1.0,
            x_next: 1,
            a_next: Some(0),
        };
        let noise = sample_noise(&mdp, &one_action(), &g, &eta, &tr).unwrap();
        assert!(noise.total_mass().abs() <= 1e-12);
        assert!(!noise.is_zero());
        let d = noise_expectation(&mdp, &one_action(), &g, &eta, 0, 0).unwrap();
        assert!(d.max_abs_weight() <= 1e-12);
    }
}
