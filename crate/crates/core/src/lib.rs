//! Tabular categorical distributional reinforcement learning.
//!
//! Categorical return distributions on a fixed support grid, the Cramér
//! projection onto that grid, probability metrics, exact and projected
//! distributional Bellman operators, sample-based mixture and KL learners,
//! and a registry of reproducible verification experiments.

pub mod bellman;
pub mod error;
pub mod experiments;
pub mod learning;
pub mod mdp;
pub mod measures;
pub mod metrics;
pub mod projection;
pub mod rng;

pub use error::{Error, Result};
