//! Experiments on exact operator and projection identities.

use rand::Rng;

use crate::bellman::{
    bellman_eval, fixed_point, noise_expectation, projected_bellman_eval, sample_noise, sandwich_sequences,
    stochastic_target, true_return_oracle, CategoricalRdf, FiniteRdf, Operator, ORACLE_ATOM_CAP,
};
use crate::error::{Error, Result};
use crate::learning::{kl_gradient, softmax, TracePoint};
use crate::mdp::{Mdp, Policy, Transition};
use crate::measures::{CategoricalDistribution, FiniteDistribution, Measure, SupportGrid};
use crate::metrics::{
    cramer_l2, cramer_l2_squared, dominates_elementwise, kl_divergence, sup_cramer, sup_metric, wasserstein_p, Metric,
    DOMINANCE_TOL,
};
use crate::projection::{project, project_via_hats};
use crate::rng::{stream, Purpose, StreamRng};

use super::config::{ExperimentConfig, GeneratorSpec, GridSpec, MdpSource};
use super::generator::{random_categorical, random_categorical_rdf, random_finite, random_grid, random_policy};
use super::report::{SeedResult, Verdict};
use super::{max_of, par_indexed, Outcome};

/// Tolerance for the CDF-average characterisation of the projection.
const CDF_AVERAGE_TOL: f64 = 1e-10;
/// Residual at which fixed points are considered exact.
const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_MAX_ITER: usize = 100_000;

fn random_ensemble() -> Option<MdpSource> {
    Some(MdpSource::Generator(GeneratorSpec {
        n_states: 3,
        n_actions: 2,
        reward_support: vec![0.0, 1.0],
        branching: 2,
        seed: 0,
    }))
}

fn ensemble_defaults(n_cases: u64, tolerance: f64) -> ExperimentConfig {
    ExperimentConfig {
        mdp: random_ensemble(),
        n_cases: Some(n_cases),
        seed: Some(7),
        tolerance: Some(tolerance),
        ..Default::default()
    }
}

fn sampling_defaults(n_cases: u64, tolerance: f64) -> ExperimentConfig {
    ExperimentConfig {
        n_cases: Some(n_cases),
        seed: Some(7),
        tolerance: Some(tolerance),
        ..Default::default()
    }
}

fn case_seed(cfg: &ExperimentConfig, case: u64) -> Result<u64> {
    Ok(cfg.seed()?.wrapping_add(case))
}

fn case_rng(cfg: &ExperimentConfig, case: u64) -> Result<StreamRng> {
    Ok(stream(case_seed(cfg, case)?, Purpose::Cases))
}

/// The MDP and policy for ensemble member `case`. Generated MDPs cycle their
/// discount through `gammas` unless the config overrides it; a policy missing
/// from the source is drawn at random.
fn case_mdp(cfg: &ExperimentConfig, case: u64, gammas: &[f64], rng: &mut StreamRng) -> Result<(Mdp, Policy)> {
    let src = cfg.mdp()?;
    let gamma = cfg.gamma.or_else(|| {
        src.is_generator()
            .then(|| gammas[(case % gammas.len() as u64) as usize])
    });
    let (mdp, pi) = src.load(case, gamma)?;
    let pi = match pi {
        Some(pi) => pi,
        None => random_policy(mdp.n_states(), mdp.n_actions(), rng),
    };
    Ok((mdp, pi))
}

fn fixed_point_of(mdp: &Mdp, pi: &Policy, grid: &SupportGrid) -> Result<(CategoricalRdf, f64)> {
    let eta0 = CategoricalRdf::dirac(mdp.n_states(), mdp.n_actions(), grid, 0)?;
    let fp = fixed_point(
        mdp,
        Operator::Evaluation(pi),
        grid,
        eta0,
        FIXED_POINT_TOL,
        FIXED_POINT_MAX_ITER,
    )?;
    // distance to the true fixed point from the last residual of a √γ-contraction
    let s = mdp.gamma().sqrt();
    let err = if s == 0.0 { 0.0 } else { fp.residual * s / (1.0 - s) };
    Ok((fp.eta, err))
}

fn gamma_constants(out: &mut Outcome, gammas: impl IntoIterator<Item = f64>) {
    for g in gammas {
        out.constant(format!("sqrt_gamma[{g}]"), g.sqrt());
    }
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub(super) fn counterexample_defaults() -> ExperimentConfig {
    ExperimentConfig {
        tolerance: Some(1e-12),
        ..Default::default()
    }
}

pub(super) fn counterexample(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let grid = SupportGrid::new(vec![0.0, 1.0])?;
    let a = FiniteDistribution::dirac(0.25)?;
    let b = FiniteDistribution::dirac(0.75)?;
    let (pa, pb) = (project(&grid, &a)?, project(&grid, &b)?);
    let before = wasserstein_p(&a, &b, 2.0)?;
    let after = wasserstein_p(&pa, &pb, 2.0)?;
    let inv_sqrt2 = 0.5_f64.sqrt();

    let mut out = Outcome::default();
    out.constant("d2_before_expected", 0.5);
    out.constant("d2_after_expected", inv_sqrt2);
    out.aggregate("d2_before", before);
    out.aggregate("d2_after", after);
    out.aggregate("cramer_before", cramer_l2(&a, &b));
    out.aggregate("cramer_after", cramer_l2(&pa, &pb));
    out.verdict(Verdict::at_most("d2_before_error", (before - 0.5).abs(), tol));
    out.verdict(Verdict::at_most("d2_after_error", (after - inv_sqrt2).abs(), tol));
    out.verdict(Verdict::greater_than("d2_expansion_ratio", after / before, 1.0));
    Ok(out)
}

pub(super) fn contraction_defaults() -> ExperimentConfig {
    ensemble_defaults(500, 1e-10)
}

const CONTRACTION_GAMMAS: [f64; 3] = [0.3, 0.5, 0.9];

pub(super) fn contraction(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &CONTRACTION_GAMMAS, &mut rng)?;
        let (lo, hi) = mdp.return_range();
        let grid = random_grid(lo - 1.0, hi + 1.0, 12, &mut rng);
        let eta = random_categorical_rdf(mdp.n_states(), mdp.n_actions(), &grid, &mut rng);
        let mu = random_categorical_rdf(mdp.n_states(), mdp.n_actions(), &grid, &mut rng);
        let g = mdp.gamma();

        let before = sup_cramer(&eta, &mu)?;
        let after = sup_cramer(
            &projected_bellman_eval(&mdp, &pi, &grid, &eta)?,
            &projected_bellman_eval(&mdp, &pi, &grid, &mu)?,
        )?;
        let (t_eta, t_mu) = (bellman_eval(&mdp, &pi, &eta)?, bellman_eval(&mdp, &pi, &mu)?);
        let mut r = SeedResult::new(case_seed(cfg, case)?)
            .value("gamma", g)
            .value("sup_cramer_before", before)
            .value("sup_cramer_after", after)
            .value("excess", after - g.sqrt() * before);
        for p in [1.0, 2.0] {
            let m = Metric::Wasserstein(p);
            let excess = sup_metric(&t_eta, &t_mu, m)? - g * sup_metric(&eta, &mu, m)?;
            r = r.value(&format!("unprojected_w{p}_excess"), excess);
        }
        Ok(r)
    })?;

    let mut out = Outcome::default();
    gamma_constants(&mut out, distinct(results.iter().map(|r| r.values["gamma"]).collect()));
    let worst = |key: &str| max_of(results.iter().map(|r| r.values[key]));
    out.aggregate(
        "max_ratio",
        max_of(results.iter().map(|r| {
            let v = &r.values;
            let denom = v["gamma"].sqrt() * v["sup_cramer_before"];
            if denom > 0.0 {
                v["sup_cramer_after"] / denom
            } else {
                0.0
            }
        })),
    );
    out.verdict(Verdict::at_most("max_projected_excess", worst("excess"), tol));
    out.verdict(Verdict::at_most(
        "max_unprojected_w1_excess",
        worst("unprojected_w1_excess"),
        tol,
    ));
    out.verdict(Verdict::at_most(
        "max_unprojected_w2_excess",
        worst("unprojected_w2_excess"),
        tol,
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn pythagoras_defaults() -> ExperimentConfig {
    sampling_defaults(1000, 1e-10)
}

/// `|ℓ2²(μ,ν) - ℓ2²(μ,Πμ) - ℓ2²(Πμ,ν)|`.
fn pythagoras_residual(grid: &SupportGrid, mu: &FiniteDistribution, nu: &CategoricalDistribution) -> Result<f64> {
    let pmu = project(grid, mu)?;
    Ok((cramer_l2_squared(mu, nu) - cramer_l2_squared(mu, &pmu) - cramer_l2_squared(&pmu, nu)).abs())
}

pub(super) fn pythagoras(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let mut out = Outcome::default();

    let grid = SupportGrid::new(vec![0.0, 1.0])?;
    let mu = FiniteDistribution::dirac(0.5)?;
    let nu = CategoricalDistribution::dirac(grid.clone(), 1)?;
    let pmu = project(&grid, &mu)?;
    let terms = [
        cramer_l2_squared(&mu, &nu),
        cramer_l2_squared(&mu, &pmu),
        cramer_l2_squared(&pmu, &nu),
    ];
    out.constant("worked_total", 0.5);
    out.constant("worked_to_projection", 0.25);
    out.constant("worked_from_projection", 0.25);
    let worked_err = max_of(terms.iter().zip([0.5, 0.25, 0.25]).map(|(t, e)| (t - e).abs()));
    out.verdict(Verdict::at_most("worked_example_error", worked_err, tol));

    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let grid = random_grid(-3.0, 3.0, 12, &mut rng);
        let mu = random_finite(grid.min(), grid.max(), 8, &mut rng);
        let nu = random_categorical(&grid, true, &mut rng);
        Ok(SeedResult::new(case_seed(cfg, case)?).value("residual", pythagoras_residual(&grid, &mu, &nu)?))
    })?;
    let worst = max_of(results.iter().map(|r| r.values["residual"]));
    out.aggregate("max_residual", worst);
    out.verdict(Verdict::at_most("max_identity_residual", worst, tol));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn equivalence_defaults() -> ExperimentConfig {
    sampling_defaults(1000, 1e-12)
}

/// Average of `F_d` over `[a, b]`, integrating each atom's step exactly.
fn cdf_average<M: Measure>(d: &M, a: f64, b: f64) -> f64 {
    let width = b - a;
    d.atoms()
        .map(|(y, m)| m * ((b - y.max(a)).clamp(0.0, width) / width))
        .sum()
}

pub(super) fn projection_equivalence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let grid = random_grid(-2.0, 2.0, 12, &mut rng);
        let d = random_finite(-3.0, 3.0, 10, &mut rng);
        let split = project(&grid, &d)?;
        let hats = project_via_hats(&grid, &d)?;
        let component = max_of(split.probs().iter().zip(hats.probs()).map(|(p, q)| (p - q).abs()));
        let z = grid.points();
        let cum = split.cumulative();
        let mut cdf_err = (cum[z.len() - 1] - 1.0).abs();
        for i in 0..z.len() - 1 {
            cdf_err = cdf_err.max((cum[i] - cdf_average(&d, z[i], z[i + 1])).abs());
        }
        let idempotent = project(&grid, &split)? == split;
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("component_error", component)
            .value("cdf_average_error", cdf_err)
            .value("idempotent", if idempotent { 1.0 } else { 0.0 }))
    })?;
    let mut out = Outcome::default();
    out.constant("cdf_average_tolerance", CDF_AVERAGE_TOL);
    let worst = |key: &str| max_of(results.iter().map(|r| r.values[key]));
    out.verdict(Verdict::at_most("max_component_error", worst("component_error"), tol));
    out.verdict(Verdict::at_most(
        "max_cdf_average_error",
        worst("cdf_average_error"),
        CDF_AVERAGE_TOL,
    ));
    let not_idempotent = results.iter().filter(|r| r.values["idempotent"] != 1.0).count();
    out.verdict(Verdict::no_failures(
        "idempotence_failures",
        not_idempotent,
        "projecting twice changes the result",
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn nonexpansion_defaults() -> ExperimentConfig {
    sampling_defaults(1000, 1e-10)
}

pub(super) fn nonexpansion(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let grid = random_grid(-2.0, 2.0, 12, &mut rng);
        let mu = random_finite(grid.min(), grid.max(), 8, &mut rng);
        let nu = random_finite(grid.min(), grid.max(), 8, &mut rng);
        let (pmu, pnu) = (project(&grid, &mu)?, project(&grid, &nu)?);
        let q = random_categorical(&grid, false, &mut rng);
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("expansion", cramer_l2(&pmu, &pnu) - cramer_l2(&mu, &nu))
            .value("suboptimality", cramer_l2(&mu, &pmu) - cramer_l2(&mu, &q)))
    })?;
    let mut out = Outcome::default();
    let worst = |key: &str| max_of(results.iter().map(|r| r.values[key]));
    out.verdict(Verdict::at_most("max_expansion", worst("expansion"), tol));
    out.verdict(Verdict::at_most(
        "max_projection_suboptimality",
        worst("suboptimality"),
        tol,
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

const BOUND_GAMMAS: [f64; 2] = [0.25, 0.5];
const BOUND_DOUBLINGS: u32 = 3;
/// Fraction of the return range removed from each end of the grid.
const NARROWING: f64 = 0.2;

pub(super) fn grid_bound_defaults() -> ExperimentConfig {
    ExperimentConfig {
        grid: Some(GridSpec { lo: 0.0, hi: 2.0, k: 5 }),
        ..ensemble_defaults(20, 1e-4)
    }
}

pub(super) fn narrowed_grid_bound_defaults() -> ExperimentConfig {
    ExperimentConfig {
        grid: Some(GridSpec { lo: 0.0, hi: 2.0, k: 9 }),
        ..ensemble_defaults(20, 1e-4)
    }
}

/// `sqrt(ℓ̄2²)` may be off by `sqrt(oracle tol)` because `ℓ2² <= d_1`, plus the
/// fixed-point error; a bound `B` on the exact squared error therefore admits
/// a measured squared error of `(sqrt(B) + slack)²`.
fn admitted(bound: f64, slack: f64) -> f64 {
    let s = bound.sqrt() + slack;
    s * s
}

fn oracle_for(mdp: &Mdp, pi: &Policy, tol: f64) -> Result<FiniteRdf> {
    Ok(true_return_oracle(mdp, pi, tol, ORACLE_ATOM_CAP)?.eta)
}

pub(super) fn grid_bound(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let spec = cfg.grid.ok_or_else(|| Error::Config("`grid` is required".into()))?;
    let ks: Vec<usize> = (0..=BOUND_DOUBLINGS)
        .map(|j| (spec.k - 1) * 2usize.pow(j) + 1)
        .collect();
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &BOUND_GAMMAS, &mut rng)?;
        let (lo, hi) = mdp.return_range();
        if lo < spec.lo || hi > spec.hi {
            return Err(Error::Config(format!(
                "returns in [{lo}, {hi}] are not confined to the grid range [{}, {}]",
                spec.lo, spec.hi
            )));
        }
        let oracle = oracle_for(&mdp, &pi, tol)?;
        let g = mdp.gamma();
        let mut r = SeedResult::new(case_seed(cfg, case)?).value("gamma", g);
        let mut prev: Option<(f64, f64)> = None;
        let mut monotone_failures = 0.0;
        let mut bound_failures = 0.0;
        for &k in &ks {
            let grid = GridSpec { k, ..spec }.build()?;
            let (eta_c, fp_err) = fixed_point_of(&mdp, &pi, &grid)?;
            let err = sup_cramer(&eta_c, &oracle)?;
            let slack = tol.sqrt() + fp_err;
            let bound = grid.max_gap() / (1.0 - g);
            if err * err > admitted(bound, slack) {
                bound_failures += 1.0;
            }
            if let Some((prev_err, prev_slack)) = prev {
                if err > prev_err + slack + prev_slack {
                    monotone_failures += 1.0;
                }
            }
            prev = Some((err, slack));
            r = r
                .value(&format!("error_sq[K={k}]"), err * err)
                .value(&format!("bound[K={k}]"), bound);
        }
        Ok(r.value("bound_failures", bound_failures)
            .value("monotone_failures", monotone_failures))
    })?;

    let mut out = Outcome::default();
    for g in distinct(results.iter().map(|r| r.values["gamma"]).collect()) {
        for &k in &ks {
            let gap = (spec.hi - spec.lo) / (k - 1) as f64;
            out.constant(format!("bound[gamma={g},K={k}]"), gap / (1.0 - g));
        }
    }
    out.constant("slack_sqrt_oracle_tol", tol.sqrt());
    let count = |key: &str| results.iter().map(|r| r.values[key]).sum::<f64>() as usize;
    out.verdict(Verdict::no_failures(
        "bound_failures",
        count("bound_failures"),
        "squared error above bound",
    ));
    out.verdict(Verdict::no_failures(
        "refinement_monotonicity_failures",
        count("monotone_failures"),
        "error grew when the grid was refined",
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

/// `(q, δ)`: the largest mass at or beyond the grid ends and the furthest
/// overshoot past them, over all entries of `eta`.
fn excess_mass(eta: &FiniteRdf, grid: &SupportGrid) -> (f64, f64) {
    let (z1, zk) = (grid.min(), grid.max());
    let mut q = 0.0_f64;
    let mut delta = 0.0_f64;
    for d in eta.iter() {
        let outside: f64 = d.atoms().filter(|&(y, _)| y <= z1 || y >= zk).map(|(_, m)| m).sum();
        q = q.max(outside);
        delta = delta.max(z1 - d.min_location()).max(d.max_location() - zk);
    }
    (q, delta)
}

pub(super) fn narrowed_grid_bound(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let spec = cfg.grid.ok_or_else(|| Error::Config("`grid` is required".into()))?;
    let margin = NARROWING * (spec.hi - spec.lo);
    let grid = SupportGrid::uniform(spec.lo + margin, spec.hi - margin, spec.k)?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &BOUND_GAMMAS, &mut rng)?;
        let oracle = oracle_for(&mdp, &pi, tol)?;
        let (q, delta) = excess_mass(&oracle, &grid);
        let (eta_c, fp_err) = fixed_point_of(&mdp, &pi, &grid)?;
        let err = sup_cramer(&eta_c, &oracle)?;
        let g = mdp.gamma();
        let bound = (grid.max_gap() + 2.0 * q * q * delta) / (1.0 - g);
        let allowed = admitted(bound, tol.sqrt() + fp_err);
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("gamma", g)
            .value("q", q)
            .value("delta", delta)
            .value("error_sq", err * err)
            .value("bound", bound)
            .value("margin", err * err - allowed))
    })?;
    let mut out = Outcome::default();
    out.constant("grid_lo", grid.min());
    out.constant("grid_hi", grid.max());
    out.constant("max_gap", grid.max_gap());
    let worst = max_of(results.iter().map(|r| r.values["margin"]));
    out.aggregate("max_q", max_of(results.iter().map(|r| r.values["q"])));
    out.verdict(Verdict::at_most("max_error_above_bound", worst, 0.0));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn monotonicity_defaults() -> ExperimentConfig {
    ensemble_defaults(500, DOMINANCE_TOL)
}

/// Moves random fractions of mass rightwards; the result dominates `d`.
fn shift_right<R: Rng>(d: &CategoricalDistribution, rng: &mut R) -> Result<CategoricalDistribution> {
    let mut p = d.probs().to_vec();
    let k = p.len();
    for _ in 0..rng.random_range(1..=2 * k) {
        let i = rng.random_range(0..k - 1);
        let j = rng.random_range(i + 1..k);
        let moved = rng.random::<f64>() * p[i];
        p[i] -= moved;
        p[j] += moved;
    }
    CategoricalDistribution::new(d.grid().clone(), p)
}

pub(super) fn monotonicity(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &CONTRACTION_GAMMAS, &mut rng)?;
        let (lo, hi) = mdp.return_range();
        let grid = random_grid(lo - 1.0, hi + 1.0, 10, &mut rng);
        let lower = random_categorical_rdf(mdp.n_states(), mdp.n_actions(), &grid, &mut rng);
        let upper = lower.try_map(|d| shift_right(d, &mut rng))?;
        let constructed = dominates_elementwise(&upper, &lower, tol)?;
        let exact = dominates_elementwise(
            &bellman_eval(&mdp, &pi, &upper)?,
            &bellman_eval(&mdp, &pi, &lower)?,
            tol,
        )?;
        let projected = dominates_elementwise(
            &projected_bellman_eval(&mdp, &pi, &grid, &upper)?,
            &projected_bellman_eval(&mdp, &pi, &grid, &lower)?,
            tol,
        )?;
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("constructed_dominance", flag(constructed))
            .value("exact_preserved", flag(exact))
            .value("projected_preserved", flag(projected)))
    })?;
    let mut out = Outcome::default();
    let failures = |key: &str| results.iter().filter(|r| r.values[key] != 1.0).count();
    out.verdict(Verdict::no_failures(
        "construction_failures",
        failures("constructed_dominance"),
        "shifted pair not ordered",
    ));
    out.verdict(Verdict::no_failures(
        "exact_operator_failures",
        failures("exact_preserved"),
        "order lost by the exact operator",
    ));
    out.verdict(Verdict::no_failures(
        "projected_operator_failures",
        failures("projected_preserved"),
        "order lost by the projected operator",
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn noise_defaults() -> ExperimentConfig {
    ensemble_defaults(20, 1e-12)
}

/// Every `(r, x', a')` outcome of `(x, a)` with its probability.
fn enumerate_transitions(mdp: &Mdp, pi: &Policy, x: usize, a: usize) -> Vec<(f64, Transition)> {
    let mut v = Vec::new();
    for e in mdp.outcomes(x, a) {
        for (a_next, &w) in pi.row(e.next).iter().enumerate() {
            if e.p * w > 0.0 {
                v.push((
                    e.p * w,
                    Transition {
                        x,
                        a,
                        r: e.r,
                        x_next: e.next,
                        a_next: Some(a_next),
                    },
                ));
            }
        }
    }
    v
}

pub(super) fn noise(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &CONTRACTION_GAMMAS, &mut rng)?;
        let (lo, hi) = mdp.return_range();
        let grid = random_grid(lo - 0.5, hi + 0.5, 10, &mut rng);
        let eta = random_categorical_rdf(mdp.n_states(), mdp.n_actions(), &grid, &mut rng);
        let mut expectation = 0.0_f64;
        let mut mass = 0.0_f64;
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let e = noise_expectation(&mdp, &pi, &grid, &eta, x, a)?;
                expectation = expectation.max(e.max_abs_weight());
                for (_, tr) in enumerate_transitions(&mdp, &pi, x, a) {
                    mass = mass.max(sample_noise(&mdp, &pi, &grid, &eta, &tr)?.total_mass().abs());
                }
            }
        }
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("max_expectation_weight", expectation)
            .value("max_sample_total_mass", mass))
    })?;
    let mut out = Outcome::default();
    let worst = |key: &str| max_of(results.iter().map(|r| r.values[key]));
    out.verdict(Verdict::at_most(
        "max_expectation_weight",
        worst("max_expectation_weight"),
        tol,
    ));
    out.verdict(Verdict::at_most(
        "max_sample_total_mass",
        worst("max_sample_total_mass"),
        tol,
    ));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn sandwich_defaults() -> ExperimentConfig {
    ExperimentConfig {
        mdp: Some(MdpSource::Named("chain".into())),
        grid: Some(GridSpec { lo: 0.0, hi: 2.0, k: 3 }),
        n_steps: Some(50),
        tolerance: Some(1e-6),
        ..Default::default()
    }
}

pub(super) fn sandwich(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let grid = cfg.grid()?;
    let k_max = cfg.n_steps()? as usize;
    let (mdp, pi) = cfg.mdp()?.load(0, None)?;
    let pi = pi.unwrap_or_else(|| Policy::uniform(mdp.n_states(), mdp.n_actions()));
    let (eta_c, fp_err) = fixed_point_of(&mdp, &pi, &grid)?;
    let s = sandwich_sequences(&mdp, &pi, &grid, k_max)?;

    let mut upper_fail = 0;
    let mut lower_fail = 0;
    let mut bracket_fail = 0;
    for k in 0..=k_max {
        if k < k_max {
            upper_fail += usize::from(!dominates_elementwise(&s.upper[k], &s.upper[k + 1], DOMINANCE_TOL)?);
            lower_fail += usize::from(!dominates_elementwise(&s.lower[k + 1], &s.lower[k], DOMINANCE_TOL)?);
        }
        let ok = dominates_elementwise(&s.upper[k], &eta_c, DOMINANCE_TOL)?
            && dominates_elementwise(&eta_c, &s.lower[k], DOMINANCE_TOL)?;
        bracket_fail += usize::from(!ok);
    }
    let trace = |seq: &[CategoricalRdf]| -> Result<Vec<TracePoint>> {
        seq.iter()
            .enumerate()
            .map(|(k, eta)| {
                Ok(TracePoint {
                    t: k as u64,
                    value: sup_cramer(eta, &eta_c)?,
                })
            })
            .collect()
    };
    let upper = trace(&s.upper)?;
    let lower = trace(&s.lower)?;
    let (u_final, l_final) = (upper[k_max].value, lower[k_max].value);

    let mut out = Outcome::default();
    out.constant("fixed_point_error_bound", fp_err);
    out.aggregate("upper_final_sup_cramer", u_final);
    out.aggregate("lower_final_sup_cramer", l_final);
    out.result(
        SeedResult::labelled(0, "sandwich")
            .trace("upper_sup_cramer", upper)
            .trace("lower_sup_cramer", lower),
    );
    out.verdict(Verdict::no_failures(
        "upper_nonincreasing_failures",
        upper_fail,
        "U_{k+1} does not lie below U_k",
    ));
    out.verdict(Verdict::no_failures(
        "lower_nondecreasing_failures",
        lower_fail,
        "L_{k+1} does not lie above L_k",
    ));
    out.verdict(Verdict::no_failures(
        "bracket_failures",
        bracket_fail,
        "fixed point not between L_k and U_k",
    ));
    out.verdict(Verdict::at_most("upper_final_sup_cramer", u_final, tol));
    out.verdict(Verdict::at_most("lower_final_sup_cramer", l_final, tol));
    Ok(out)
}

pub(super) fn target_expectation_defaults() -> ExperimentConfig {
    ensemble_defaults(20, 1e-12)
}

pub(super) fn stochastic_target_expectation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let (mdp, pi) = case_mdp(cfg, case, &CONTRACTION_GAMMAS, &mut rng)?;
        let (lo, hi) = mdp.return_range();
        let grid = random_grid(lo - 0.5, hi + 0.5, 10, &mut rng);
        let eta = random_categorical_rdf(mdp.n_states(), mdp.n_actions(), &grid, &mut rng);
        let exact = bellman_eval(&mdp, &pi, &eta)?;
        let mut worst = 0.0_f64;
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let targets = enumerate_transitions(&mdp, &pi, x, a)
                    .into_iter()
                    .map(|(w, tr)| Ok((w, stochastic_target(mdp.gamma(), &tr, &eta)?)))
                    .collect::<Result<Vec<_>>>()?;
                let row = exact.get(x, a);
                let mut breakpoints: Vec<f64> = row.locations().to_vec();
                for (_, t) in &targets {
                    breakpoints.extend_from_slice(t.locations());
                }
                for b in breakpoints {
                    let avg: f64 = targets.iter().map(|(w, t)| w * t.cdf(b)).sum();
                    worst = worst.max((avg - row.cdf(b)).abs());
                }
            }
        }
        Ok(SeedResult::new(case_seed(cfg, case)?).value("max_cdf_error", worst))
    })?;
    let mut out = Outcome::default();
    let worst = max_of(results.iter().map(|r| r.values["max_cdf_error"]));
    out.verdict(Verdict::at_most("max_cdf_error", worst, tol));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

pub(super) fn kl_gradient_defaults() -> ExperimentConfig {
    sampling_defaults(200, 1e-6)
}

/// Central-difference step for the gradient check.
const FD_STEP: f64 = 1e-5;

pub(super) fn kl_gradient_check(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let results = par_indexed(cfg.n_cases()?, |case| {
        let mut rng = case_rng(cfg, case)?;
        let k = rng.random_range(2..=12);
        let grid = SupportGrid::uniform(0.0, 1.0, k)?;
        let theta: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
        let target = random_categorical(&grid, true, &mut rng);
        let objective = |th: &[f64]| -> Result<f64> {
            kl_divergence(&target, &CategoricalDistribution::new(grid.clone(), softmax(th))?)
        };
        let analytic = kl_gradient(&theta, target.probs());
        let mut worst = 0.0_f64;
        for i in 0..k {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[i] += FD_STEP;
            minus[i] -= FD_STEP;
            let fd = (objective(&plus)? - objective(&minus)?) / (2.0 * FD_STEP);
            worst = worst.max((fd - analytic[i]).abs());
        }
        let scale = max_of(analytic.iter().map(|g| g.abs())).max(1e-8);
        Ok(SeedResult::new(case_seed(cfg, case)?)
            .value("relative_error", worst / scale)
            .value("gradient_sum", analytic.iter().sum::<f64>().abs()))
    })?;
    let mut out = Outcome::default();
    out.constant("finite_difference_step", FD_STEP);
    let worst = |key: &str| max_of(results.iter().map(|r| r.values[key]));
    out.verdict(Verdict::at_most("max_relative_error", worst("relative_error"), tol));
    out.verdict(Verdict::at_most("max_gradient_sum", worst("gradient_sum"), 1e-12));
    for r in results {
        out.result(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::stochastically_dominates;

    #[test]
    fn cdf_average_of_dirac() {
        let d = FiniteDistribution::dirac(0.25).unwrap();
        assert_eq!(cdf_average(&d, 0.0, 1.0), 0.75);
        assert_eq!(cdf_average(&d, -1.0, 0.0), 0.0);
        assert_eq!(cdf_average(&d, 0.5, 1.0), 1.0);
    }

    #[test]
    fn shifted_rows_dominate() {
        let mut rng = stream(1, Purpose::Cases);
        let g = SupportGrid::uniform(0.0, 1.0, 6).unwrap();
        for _ in 0..100 {
            let d = random_categorical(&g, true, &mut rng);
            let s = shift_right(&d, &mut rng).unwrap();
            assert!(stochastically_dominates(&s, &d, DOMINANCE_TOL));
        }
    }

    #[test]
    fn excess_mass_counts_grid_ends() {
        let grid = SupportGrid::uniform(0.0, 1.0, 3).unwrap();
        let d = FiniteDistribution::new(vec![(-0.5, 0.1), (0.5, 0.7), (1.0, 0.2)]).unwrap();
        let eta = FiniteRdf::filled(1, 1, d);
        let (q, delta) = excess_mass(&eta, &grid);
        assert!((q - 0.3).abs() < 1e-15);
        assert_eq!(delta, 0.5);
    }
}
