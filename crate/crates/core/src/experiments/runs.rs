//! Experiments that run the stochastic learners over several seeds.

use crate::bellman::{fixed_point, CategoricalRdf, Operator};
use crate::error::Result;
use crate::learning::{run_kl_policy_evaluation, run_policy_evaluation, run_q_learning, StepSchedule, TracePoint};
use crate::mdp::{catalog, value_iteration, Mdp, Policy};
use crate::measures::{Measure, MASS_TOL};

use super::config::{ExperimentConfig, GridSpec, MdpSource};
use super::report::{SeedResult, Verdict};
use super::{max_of, median, par_indexed, Outcome};

/// Number of blocks the seed-averaged trace is split into for the trend check.
const TREND_BLOCKS: usize = 10;
/// Allowed rise of one block mean over the previous one.
const TREND_SLACK: f64 = 0.01;
const SEED_FRACTION: f64 = 0.8;
const CONTROL_FRACTION: f64 = 0.9;

fn learner_defaults(mdp: Option<MdpSource>, k: usize, n_seeds: u64, tolerance: f64) -> ExperimentConfig {
    ExperimentConfig {
        mdp,
        grid: Some(GridSpec { lo: 0.0, hi: 2.0, k }),
        schedule: Some(StepSchedule::default()),
        n_steps: Some(10_000),
        n_seeds: Some(n_seeds),
        seed: Some(0),
        tolerance: Some(tolerance),
        ..Default::default()
    }
}

fn seeds(cfg: &ExperimentConfig) -> Result<Vec<u64>> {
    let base = cfg.seed()?;
    Ok((0..cfg.n_seeds()?).map(|i| base.wrapping_add(i)).collect())
}

fn load_with_policy(src: &MdpSource) -> Result<(Mdp, Policy)> {
    let (mdp, pi) = src.load(0, None)?;
    let pi = pi.unwrap_or_else(|| Policy::uniform(mdp.n_states(), mdp.n_actions()));
    Ok((mdp, pi))
}

fn categorical_fixed_point(mdp: &Mdp, pi: &Policy, cfg: &ExperimentConfig) -> Result<CategoricalRdf> {
    let grid = cfg.grid()?;
    let eta0 = CategoricalRdf::dirac(mdp.n_states(), mdp.n_actions(), &grid, 0)?;
    Ok(fixed_point(mdp, Operator::Evaluation(pi), &grid, eta0, 1e-12, 100_000)?.eta)
}

/// Block means of the pointwise average of equal-length traces.
fn block_means(traces: &[&[TracePoint]], blocks: usize) -> Vec<f64> {
    let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
    let avg: Vec<f64> = (0..len)
        .map(|i| traces.iter().map(|t| t[i].value).sum::<f64>() / traces.len() as f64)
        .collect();
    let blocks = blocks.min(len).max(1);
    (0..blocks)
        .map(|b| {
            let chunk = &avg[b * len / blocks..(b + 1) * len / blocks];
            chunk.iter().sum::<f64>() / chunk.len().max(1) as f64
        })
        .collect()
}

pub(super) fn convergence_defaults() -> ExperimentConfig {
    learner_defaults(Some(MdpSource::Named("chain".into())), 3, 10, 0.05)
}

pub(super) fn convergence(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let (mdp, pi) = load_with_policy(cfg.mdp()?)?;
    let grid = cfg.grid()?;
    let reference = categorical_fixed_point(&mdp, &pi, cfg)?;
    let (schedule, n_steps) = (cfg.schedule()?, cfg.n_steps()?);
    let seeds = seeds(cfg)?;
    let runs = par_indexed(seeds.len() as u64, |i| {
        run_policy_evaluation(&mdp, &pi, &grid, schedule, n_steps, seeds[i as usize], &reference)
    })?;

    let finals: Vec<f64> = runs
        .iter()
        .map(|r| r.trace.last().map_or(f64::NAN, |p| p.value))
        .collect();
    let within = finals.iter().filter(|&&d| d <= tol).count() as f64 / finals.len() as f64;
    let traces: Vec<&[TracePoint]> = runs.iter().map(|r| r.trace.as_slice()).collect();
    let blocks = block_means(&traces, TREND_BLOCKS);
    let rises = blocks.windows(2).filter(|w| w[1] > w[0] + TREND_SLACK).count();

    let mut out = Outcome::default();
    out.aggregate("median_final_sup_cramer", median(&finals));
    out.aggregate("max_final_sup_cramer", max_of(finals.iter().copied()));
    out.aggregate("fraction_within_tolerance", within);
    for (b, m) in blocks.iter().enumerate() {
        out.aggregate(format!("block_mean[{b}]"), *m);
    }
    out.verdict(Verdict::at_most("median_final_sup_cramer", median(&finals), tol));
    out.verdict(Verdict::at_least("fraction_within_tolerance", within, SEED_FRACTION));
    out.verdict(Verdict::no_failures(
        "trend_rises",
        rises,
        "seed-averaged block mean rose by more than the slack",
    ));
    for (run, &seed) in runs.into_iter().zip(&seeds) {
        let last = run.trace.last().map_or(f64::NAN, |p| p.value);
        out.result(
            SeedResult::new(seed)
                .value("final_sup_cramer", last)
                .trace("sup_cramer", run.trace),
        );
    }
    Ok(out)
}

pub(super) fn control_defaults() -> ExperimentConfig {
    learner_defaults(None, 11, 10, 0.1)
}

pub(super) fn control(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let mdps: Vec<(String, Mdp)> = match &cfg.mdp {
        Some(src) => vec![(source_label(src), src.load(0, None)?.0)],
        None => vec![
            ("bandit".into(), catalog::bandit()),
            ("three_state".into(), catalog::three_state()),
        ],
    };
    let grid = cfg.grid()?;
    let (schedule, n_steps) = (cfg.schedule()?, cfg.n_steps()?);
    let seeds = seeds(cfg)?;

    let mut out = Outcome::default();
    for (label, mdp) in &mdps {
        let q_star = value_iteration(mdp, 1e-12);
        let optimal = q_star.greedy_actions();
        let gap = q_star.min_action_gap();
        for x in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                out.constant(format!("{label}.q_star[{x},{a}]"), q_star.get(x, a));
            }
        }
        let runs = par_indexed(seeds.len() as u64, |i| {
            run_q_learning(mdp, &grid, schedule, n_steps, seeds[i as usize])
        })?;
        let mut greedy_ok = 0;
        let mut value_ok = 0;
        for (run, &seed) in runs.into_iter().zip(&seeds) {
            let matches = (0..mdp.n_states()).all(|x| run.greedy.deterministic_action(x) == Some(optimal[x]));
            let err = run.trace.last().map_or(f64::NAN, |p| p.value);
            greedy_ok += usize::from(matches);
            value_ok += usize::from(err <= tol);
            out.result(
                SeedResult::labelled(seed, label.clone())
                    .value("greedy_matches_optimal", if matches { 1.0 } else { 0.0 })
                    .value("final_max_q_error", err)
                    .trace("max_q_error", run.trace),
            );
        }
        let n = seeds.len() as f64;
        out.verdict(Verdict::greater_than(&format!("{label}.optimal_action_gap"), gap, 0.0));
        out.verdict(Verdict::at_least(
            &format!("{label}.greedy_optimal_fraction"),
            greedy_ok as f64 / n,
            CONTROL_FRACTION,
        ));
        out.verdict(Verdict::at_least(
            &format!("{label}.q_error_within_tolerance_fraction"),
            value_ok as f64 / n,
            CONTROL_FRACTION,
        ));
    }
    Ok(out)
}

fn source_label(src: &MdpSource) -> String {
    match src {
        MdpSource::Named(name) => name.clone(),
        MdpSource::File(path) => path.display().to_string(),
        MdpSource::Inline(_) => "inline".into(),
        MdpSource::Generator(_) => "generated".into(),
    }
}

pub(super) fn kl_vs_mixture_defaults() -> ExperimentConfig {
    learner_defaults(Some(MdpSource::Named("three_state".into())), 11, 5, 1e-12)
}

/// Largest deviation of any row from a strictly positive distribution, or
/// infinity if some probability is not positive.
fn row_validity_error(eta: &CategoricalRdf, strictly_positive: bool) -> f64 {
    eta.iter()
        .map(|d| {
            if d.probs()
                .iter()
                .any(|&p| !p.is_finite() || p < 0.0 || (strictly_positive && p <= 0.0))
            {
                f64::INFINITY
            } else {
                (d.total_mass() - 1.0).abs()
            }
        })
        .fold(0.0, f64::max)
}

pub(super) fn kl_vs_mixture(cfg: &ExperimentConfig) -> Result<Outcome> {
    let tol = cfg.tolerance()?;
    let (mdp, pi) = load_with_policy(cfg.mdp()?)?;
    let grid = cfg.grid()?;
    let reference = categorical_fixed_point(&mdp, &pi, cfg)?;
    let (schedule, n_steps) = (cfg.schedule()?, cfg.n_steps()?);
    let seeds = seeds(cfg)?;
    let runs = par_indexed(seeds.len() as u64, |i| {
        let seed = seeds[i as usize];
        let mixture = run_policy_evaluation(&mdp, &pi, &grid, schedule, n_steps, seed, &reference)?;
        let kl = run_kl_policy_evaluation(&mdp, &pi, &grid, schedule, n_steps, seed, &reference)?;
        Ok((mixture, kl))
    })?;

    let mut out = Outcome::default();
    out.constant("mass_tolerance", MASS_TOL);
    let mut mixture_err = 0.0_f64;
    let mut kl_err = 0.0_f64;
    let mut finals = (Vec::new(), Vec::new());
    for ((mixture, kl), &seed) in runs.into_iter().zip(&seeds) {
        mixture_err = mixture_err.max(row_validity_error(&mixture.eta, false));
        kl_err = kl_err.max(row_validity_error(&kl.eta, true));
        let m_final = mixture.trace.last().map_or(f64::NAN, |p| p.value);
        let k_final = kl.trace.last().map_or(f64::NAN, |p| p.value);
        finals.0.push(m_final);
        finals.1.push(k_final);
        out.result(
            SeedResult::new(seed)
                .value("mixture_final_sup_cramer", m_final)
                .value("kl_final_sup_cramer", k_final)
                .trace("mixture_sup_cramer", mixture.trace)
                .trace("kl_sup_cramer", kl.trace),
        );
    }
    out.aggregate("mixture_median_final_sup_cramer", median(&finals.0));
    out.aggregate("kl_median_final_sup_cramer", median(&finals.1));
    out.verdict(Verdict::at_most("mixture_row_mass_error", mixture_err, tol));
    out.verdict(Verdict::at_most("kl_row_mass_error", kl_err, tol));
    Ok(out)
}
