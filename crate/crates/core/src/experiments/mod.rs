//! Named, config-driven verification experiments.
//!
//! Each experiment in [`REGISTRY`] checks one mathematical property of the
//! operators or learners, records per-seed measurements, and emits pass/fail
//! [`Verdict`]s against pinned tolerances. Runs are deterministic given the
//! resolved config, which is echoed into the report.

mod config;
mod exact;
mod generator;
mod report;
mod runs;

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use config::{
    named_mdp, ExperimentConfig, Field, GeneratorSpec, GridSpec, MdpSource, OutputSpec, ReportFormat, NAMED_MDPS,
};
pub use generator::{
    dirichlet, generate_random_mdp, random_categorical, random_categorical_rdf, random_finite, random_grid,
    random_policy,
};
pub use report::{emit_report, ExperimentReport, SeedResult, Verdict};

/// Everything an experiment body produces besides timing and the config echo.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    seeds: Vec<u64>,
    results: Vec<SeedResult>,
    aggregates: BTreeMap<String, f64>,
    constants: BTreeMap<String, f64>,
    verdicts: Vec<Verdict>,
}

impl Outcome {
    fn result(&mut self, r: SeedResult) {
        self.seeds.push(r.seed);
        self.results.push(r);
    }

    fn aggregate(&mut self, name: impl Into<String>, v: f64) {
        self.aggregates.insert(name.into(), v);
    }

    fn constant(&mut self, name: impl Into<String>, v: f64) {
        self.constants.insert(name.into(), v);
    }

    fn verdict(&mut self, v: Verdict) {
        self.verdicts.push(v);
    }
}

/// A registered experiment.
pub struct Experiment {
    pub name: &'static str,
    pub summary: &'static str,
    /// Config fields the experiment reads; setting any other is an error.
    pub fields: &'static [Field],
    defaults: fn() -> ExperimentConfig,
    run: fn(&ExperimentConfig) -> Result<Outcome>,
}

impl Experiment {
    /// The fully resolved default configuration.
    pub fn default_config(&self) -> ExperimentConfig {
        let mut cfg = (self.defaults)();
        cfg.experiment = self.name.into();
        cfg
    }
}

use config::Field as F;

pub static REGISTRY: &[Experiment] = &[
    Experiment {
        name: "lemma2_counterexample",
        summary: "projection expands d_2 between two Diracs on grid {0, 1}",
        fields: &[F::Tolerance],
        defaults: exact::counterexample_defaults,
        run: exact::counterexample,
    },
    Experiment {
        name: "contraction_prop2",
        summary: "projected operator is a sqrt(gamma)-contraction in sup-Cramér",
        fields: &[F::Mdp, F::Gamma, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::contraction_defaults,
        run: exact::contraction,
    },
    Experiment {
        name: "pythagoras_lemma3",
        summary: "Pythagorean identity for the Cramér projection",
        fields: &[F::NCases, F::Seed, F::Tolerance],
        defaults: exact::pythagoras_defaults,
        run: exact::pythagoras,
    },
    Experiment {
        name: "projection_equivalence_prop6",
        summary: "mass-splitting and hat-function projections agree; CDF-average form",
        fields: &[F::NCases, F::Seed, F::Tolerance],
        defaults: exact::equivalence_defaults,
        run: exact::projection_equivalence,
    },
    Experiment {
        name: "nonexpansion_prop1",
        summary: "projection is an l2 non-expansion and the l2-closest grid distribution",
        fields: &[F::NCases, F::Seed, F::Tolerance],
        defaults: exact::nonexpansion_defaults,
        run: exact::nonexpansion,
    },
    Experiment {
        name: "bound_prop3",
        summary: "sup-Cramér error of the categorical fixed point vs grid spacing",
        fields: &[F::Mdp, F::Gamma, F::Grid, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::grid_bound_defaults,
        run: exact::grid_bound,
    },
    Experiment {
        name: "bound_prop4",
        summary: "fixed-point error bound with a grid narrower than the returns",
        fields: &[F::Mdp, F::Gamma, F::Grid, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::narrowed_grid_bound_defaults,
        run: exact::narrowed_grid_bound,
    },
    Experiment {
        name: "monotonicity_prop5",
        summary: "exact and projected operators preserve stochastic dominance",
        fields: &[F::Mdp, F::Gamma, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::monotonicity_defaults,
        run: exact::monotonicity,
    },
    Experiment {
        name: "noise_lemma4",
        summary: "projected sampling noise has zero mass and zero expectation",
        fields: &[F::Mdp, F::Gamma, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::noise_defaults,
        run: exact::noise,
    },
    Experiment {
        name: "sandwich_lemma5",
        summary: "averaged iterates from both grid ends are monotone and close in",
        fields: &[F::Mdp, F::Grid, F::NSteps, F::Tolerance],
        defaults: exact::sandwich_defaults,
        run: exact::sandwich,
    },
    Experiment {
        name: "stochastic_target_expectation",
        summary: "kernel-averaged sampled targets equal the exact Bellman image",
        fields: &[F::Mdp, F::Gamma, F::NCases, F::Seed, F::Tolerance],
        defaults: exact::target_expectation_defaults,
        run: exact::stochastic_target_expectation,
    },
    Experiment {
        name: "kl_gradient_check",
        summary: "closed-form KL gradient matches central finite differences",
        fields: &[F::NCases, F::Seed, F::Tolerance],
        defaults: exact::kl_gradient_defaults,
        run: exact::kl_gradient_check,
    },
    Experiment {
        name: "convergence_thm1",
        summary: "mixture-update policy evaluation converges to the categorical fixed point",
        fields: &[
            F::Mdp,
            F::Grid,
            F::Schedule,
            F::NSteps,
            F::NSeeds,
            F::Seed,
            F::Tolerance,
        ],
        defaults: runs::convergence_defaults,
        run: runs::convergence,
    },
    Experiment {
        name: "control_thm2",
        summary: "mixture-update control recovers the optimal policy and values",
        fields: &[
            F::Mdp,
            F::Grid,
            F::Schedule,
            F::NSteps,
            F::NSeeds,
            F::Seed,
            F::Tolerance,
        ],
        defaults: runs::control_defaults,
        run: runs::control,
    },
    Experiment {
        name: "kl_vs_mixture",
        summary: "exploratory comparison of KL and mixture updates (validity checks only)",
        fields: &[
            F::Mdp,
            F::Grid,
            F::Schedule,
            F::NSteps,
            F::NSeeds,
            F::Seed,
            F::Tolerance,
        ],
        defaults: runs::kl_vs_mixture_defaults,
        run: runs::kl_vs_mixture,
    },
];

pub fn find_experiment(name: &str) -> Result<&'static Experiment> {
    REGISTRY
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownExperiment(name.into()))
}

/// Resolves `config` against the experiment's defaults, runs it, writes the
/// report if `config.output` is set, and returns the report.
pub fn run_experiment(config: ExperimentConfig) -> Result<ExperimentReport> {
    let exp = find_experiment(&config.experiment)?;
    let cfg = config.resolve(exp.default_config(), exp.fields)?;
    let start = Instant::now();
    let outcome = (exp.run)(&cfg)?;
    let report = ExperimentReport {
        experiment: exp.name.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg,
        seeds: outcome.seeds,
        results: outcome.results,
        aggregates: outcome.aggregates,
        constants: outcome.constants,
        verdicts: outcome.verdicts,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    };
    if let Some(out) = &report.config.output {
        emit_report(&report, out.format, &out.path)?;
    }
    Ok(report)
}

/// Runs `f` for every index in parallel and returns results in index order.
fn par_indexed<T: Send>(n: u64, f: impl Fn(u64) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..n).into_par_iter().map(f).collect()
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(f64::NEG_INFINITY, f64::max)
}
