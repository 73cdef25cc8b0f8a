use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::TracePoint;

use super::config::{ExperimentConfig, ReportFormat};

/// One pass/fail assertion, with the measured quantity and its threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Verdict {
    /// Passes iff `measured <= threshold`.
    pub fn at_most(name: &str, measured: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: "measured <= threshold".into(),
        }
    }

    /// Passes iff `measured >= threshold`.
    pub fn at_least(name: &str, measured: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: measured >= threshold,
            measured,
            threshold,
            detail: "measured >= threshold".into(),
        }
    }

    /// Passes iff `measured > threshold`.
    pub fn greater_than(name: &str, measured: f64, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            passed: measured > threshold,
            measured,
            threshold,
            detail: "measured > threshold".into(),
        }
    }

    /// Counts failures: passes iff `failures == 0`.
    pub fn no_failures(name: &str, failures: usize, detail: &str) -> Self {
        Verdict {
            name: name.into(),
            passed: failures == 0,
            measured: failures as f64,
            threshold: 0.0,
            detail: detail.into(),
        }
    }
}

/// Measurements for one seed or ensemble member.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub traces: BTreeMap<String, Vec<TracePoint>>,
}

impl SeedResult {
    pub fn new(seed: u64) -> Self {
        SeedResult {
            seed,
            ..Default::default()
        }
    }

    pub fn labelled(seed: u64, label: impl Into<String>) -> Self {
        SeedResult {
            seed,
            label: label.into(),
            ..Default::default()
        }
    }

    pub fn value(mut self, name: &str, v: f64) -> Self {
        self.values.insert(name.into(), v);
        self
    }

    pub fn trace(mut self, name: &str, points: Vec<TracePoint>) -> Self {
        self.traces.insert(name.into(), points);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub version: String,
    /// The fully resolved configuration; re-running it reproduces this report.
    pub config: ExperimentConfig,
    /// Every seed the experiment drew randomness from, in result order.
    pub seeds: Vec<u64>,
    pub results: Vec<SeedResult>,
    pub aggregates: BTreeMap<String, f64>,
    /// Reference constants from the claims under test, computed independently.
    pub constants: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub wall_clock_secs: f64,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn failed_verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.passed)
    }

    /// The report with run-dependent timing removed, for determinism checks.
    pub fn without_timing(&self) -> Self {
        ExperimentReport {
            wall_clock_secs: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Tidy CSV `experiment,seed,t,metric,value`: one row per logged trace
    /// point, then one row with an empty `t` per scalar value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["experiment", "seed", "t", "metric", "value"])?;
        for r in &self.results {
            let seed = r.seed.to_string();
            for (metric, points) in &r.traces {
                for p in points {
                    w.write_record([
                        self.experiment.as_str(),
                        &seed,
                        &p.t.to_string(),
                        metric,
                        &p.value.to_string(),
                    ])?;
                }
            }
            for (metric, v) in &r.values {
                w.write_record([self.experiment.as_str(), &seed, "", metric, &v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.into()))?;
        Ok(())
    }
}

/// Writes `report` to `path` as CSV or pretty JSON.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Json => {
            let text = report.to_json()?;
            out.write_all(text.as_bytes())
                .and_then(|_| out.write_all(b"\n"))
                .map_err(|e| Error::io(path, e))?;
        }
        ReportFormat::Csv => report.write_csv(&mut out).map_err(|e| match e {
            Error::Csv(c) if c.is_io_error() => Error::io(path, std::io::Error::other(c.to_string())),
            other => other,
        })?,
    }
    out.flush().map_err(|e| Error::io(path, e))
}
