//! Reproducible experiments for TDE egomotion networks: configuration and
//! the `sweep`, `estimate` and `analog` commands behind the `tde-ego` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_analog, cmd_estimate, cmd_sweep, RunSummary};
pub use config::ExperimentConfig;
