//! Experiment runner for confidence-region Bayesian optimization: run
//! benchmark suites from a TOML config, aggregate run records into
//! delimited tables, and run quick property checks.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{ExperimentConfig, Overrides, Suite};
pub use error::CliError;
