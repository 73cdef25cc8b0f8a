use std::path::PathBuf;

use thiserror::Error;

use crate::mdp::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid support grid: {0}")]
    InvalidGrid(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    Parameter {
        name: &'static str,
        value: String,
        reason: String,
    },

    #[error("distributions live on different support grids")]
    GridMismatch,

    #[error("return distribution functions have mismatched shapes: {0}")]
    ShapeMismatch(String),

    #[error("invalid MDP ({} problem(s)): {}", .0.len(), join_diagnostics(.0))]
    InvalidMdp(Vec<Diagnostic>),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error(
        "return oracle infeasible: {atoms} atoms at step {step} exceeds cap {cap}; reduce the horizon or MDP size"
    )]
    OracleInfeasible { atoms: usize, cap: usize, step: usize },

    #[error("unknown experiment `{0}` (see `cdrl list`)")]
    UnknownExperiment(String),

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parameter(name: &'static str, value: impl ToString, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            value: value.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn join_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
