use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::StepSchedule;
use crate::mdp::{catalog, Mdp, MdpFile, Policy};
use crate::measures::SupportGrid;

use super::generator::generate_random_mdp;

/// Where an experiment's MDP comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// One of `chain`, `bandit`, `three_state`, `coin_flip`.
    Named(String),
    File(PathBuf),
    Inline(MdpFile),
    /// Random MDPs; ensemble experiments use seed `seed + case`.
    Generator(GeneratorSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub reward_support: Vec<f64>,
    pub branching: usize,
    pub seed: u64,
}

pub const NAMED_MDPS: &[&str] = &["chain", "bandit", "three_state", "coin_flip"];

pub fn named_mdp(name: &str) -> Result<Mdp> {
    match name {
        "chain" => Ok(catalog::chain()),
        "bandit" => Ok(catalog::bandit()),
        "three_state" => Ok(catalog::three_state()),
        "coin_flip" => Ok(catalog::coin_flip()),
        other => Err(Error::Config(format!(
            "unknown named MDP `{other}` (known: {})",
            NAMED_MDPS.join(", ")
        ))),
    }
}

impl MdpSource {
    /// The MDP for ensemble member `case`, with `gamma` overriding its discount.
    pub fn load(&self, case: u64, gamma: Option<f64>) -> Result<(Mdp, Option<Policy>)> {
        let (mdp, policy) = match self {
            MdpSource::Named(name) => (named_mdp(name)?, None),
            MdpSource::File(path) => MdpFile::load(path)?.into_mdp()?,
            MdpSource::Inline(doc) => doc.clone().into_mdp()?,
            MdpSource::Generator(g) => {
                let gamma = gamma.unwrap_or(0.5);
                let mdp = generate_random_mdp(
                    g.n_states,
                    g.n_actions,
                    &g.reward_support,
                    g.branching,
                    gamma,
                    g.seed.wrapping_add(case),
                )?;
                (mdp, None)
            }
        };
        match gamma {
            Some(g) if g != mdp.gamma() => Ok((mdp.with_gamma(g)?, policy)),
            _ => Ok((mdp, policy)),
        }
    }

    pub fn is_generator(&self) -> bool {
        matches!(self, MdpSource::Generator(_))
    }
}

/// Uniform grid of `k` points on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
}

impl GridSpec {
    pub fn build(&self) -> Result<SupportGrid> {
        SupportGrid::uniform(self.lo, self.hi, self.k)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!("unknown report format `{other}` (csv or json)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

/// Experiment configuration. Unset fields take the experiment's defaults;
/// setting a field the experiment does not use is an error.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mdp: Option<MdpSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<StepSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seeds: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_cases: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// Config fields an experiment may read.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Mdp,
    Grid,
    Gamma,
    Schedule,
    NSteps,
    NSeeds,
    NCases,
    Seed,
    Tolerance,
}

impl Field {
    fn name(self) -> &'static str {
        match self {
            Field::Mdp => "mdp",
            Field::Grid => "grid",
            Field::Gamma => "gamma",
            Field::Schedule => "schedule",
            Field::NSteps => "n_steps",
            Field::NSeeds => "n_seeds",
            Field::NCases => "n_cases",
            Field::Seed => "seed",
            Field::Tolerance => "tolerance",
        }
    }
}

fn missing(field: &str) -> Error {
    Error::Config(format!("`{field}` is required"))
}

impl ExperimentConfig {
    pub fn new(experiment: impl Into<String>) -> Self {
        ExperimentConfig {
            experiment: experiment.into(),
            ..Default::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn is_set(&self, field: Field) -> bool {
        match field {
            Field::Mdp => self.mdp.is_some(),
            Field::Grid => self.grid.is_some(),
            Field::Gamma => self.gamma.is_some(),
            Field::Schedule => self.schedule.is_some(),
            Field::NSteps => self.n_steps.is_some(),
            Field::NSeeds => self.n_seeds.is_some(),
            Field::NCases => self.n_cases.is_some(),
            Field::Seed => self.seed.is_some(),
            Field::Tolerance => self.tolerance.is_some(),
        }
    }

    /// Fills unset fields from `defaults` after rejecting fields outside `used`.
    pub(crate) fn resolve(self, defaults: ExperimentConfig, used: &[Field]) -> Result<Self> {
        const ALL: [Field; 9] = [
            Field::Mdp,
            Field::Grid,
            Field::Gamma,
            Field::Schedule,
            Field::NSteps,
            Field::NSeeds,
            Field::NCases,
            Field::Seed,
            Field::Tolerance,
        ];
        for f in ALL {
            if self.is_set(f) && !used.contains(&f) {
                return Err(Error::Config(format!(
                    "`{}` is not used by experiment `{}`",
                    f.name(),
                    self.experiment
                )));
            }
        }
        let cfg = ExperimentConfig {
            experiment: self.experiment,
            mdp: self.mdp.or(defaults.mdp),
            grid: self.grid.or(defaults.grid),
            gamma: self.gamma.or(defaults.gamma),
            schedule: self.schedule.or(defaults.schedule),
            n_steps: self.n_steps.or(defaults.n_steps),
            n_seeds: self.n_seeds.or(defaults.n_seeds),
            n_cases: self.n_cases.or(defaults.n_cases),
            seed: self.seed.or(defaults.seed),
            tolerance: self.tolerance.or(defaults.tolerance),
            output: self.output,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<()> {
        if let Some(t) = self.tolerance {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("tolerance must be positive, got {t}")));
            }
        }
        if let Some(g) = self.gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Config(format!("gamma must lie in [0, 1), got {g}")));
            }
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        if let Some(g) = &self.grid {
            g.build()?;
        }
        if self.n_seeds == Some(0) {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if self.n_cases == Some(0) {
            return Err(Error::Config("n_cases must be at least 1".into()));
        }
        Ok(())
    }

    pub(crate) fn tolerance(&self) -> Result<f64> {
        self.tolerance.ok_or_else(|| missing("tolerance"))
    }

    pub(crate) fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| missing("seed"))
    }

    pub(crate) fn n_cases(&self) -> Result<u64> {
        self.n_cases.ok_or_else(|| missing("n_cases"))
    }

    pub(crate) fn n_seeds(&self) -> Result<u64> {
        self.n_seeds.ok_or_else(|| missing("n_seeds"))
    }

    pub(crate) fn n_steps(&self) -> Result<u64> {
        self.n_steps.ok_or_else(|| missing("n_steps"))
    }

    pub(crate) fn grid(&self) -> Result<SupportGrid> {
        self.grid.ok_or_else(|| missing("grid"))?.build()
    }

    pub(crate) fn schedule(&self) -> Result<StepSchedule> {
        self.schedule.ok_or_else(|| missing("schedule"))
    }

    pub(crate) fn mdp(&self) -> Result<&MdpSource> {
        self.mdp.as_ref().ok_or_else(|| missing("mdp"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"x","typo":1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"experiment":"x","grid":{"lo":0,"hi":1,"k":3,"z":1}}"#).is_err());
        let cfg = ExperimentConfig::from_json(
            r#"{"experiment":"x","mdp":{"named":"chain"},"grid":{"lo":0,"hi":2,"k":3},"seed":4}"#,
        )
        .unwrap();
        assert_eq!(cfg.mdp, Some(MdpSource::Named("chain".into())));
        assert_eq!(cfg.seed, Some(4));
    }

    #[test]
    fn resolve_fills_defaults_and_rejects_unused() {
        let defaults = ExperimentConfig {
            seed: Some(1),
            tolerance: Some(1e-6),
            ..ExperimentConfig::new("x")
        };
        let mut cfg = ExperimentConfig::new("x");
        cfg.seed = Some(9);
        let r = cfg.resolve(defaults.clone(), &[Field::Seed, Field::Tolerance]).unwrap();
        assert_eq!((r.seed, r.tolerance), (Some(9), Some(1e-6)));

        let mut cfg = ExperimentConfig::new("x");
        cfg.n_steps = Some(5);
        assert!(cfg.resolve(defaults.clone(), &[Field::Seed]).is_err());

        let mut cfg = ExperimentConfig::new("x");
        cfg.tolerance = Some(0.0);
        assert!(cfg.resolve(defaults, &[Field::Tolerance]).is_err());
    }

    #[test]
    fn sources_load() {
        let (mdp, pi) = MdpSource::Named("chain".into()).load(0, None).unwrap();
        assert_eq!(mdp, catalog::chain());
        assert!(pi.is_none());
        let (mdp, _) = MdpSource::Named("chain".into()).load(0, Some(0.25)).unwrap();
        assert_eq!(mdp.gamma(), 0.25);
        assert!(MdpSource::Named("nope".into()).load(0, None).is_err());
        assert!(MdpSource::File("/nonexistent/mdp.json".into()).load(0, None).is_err());
    }
}
