//! Experiment harness: scenario runs, NVD ingestion, equilibrium solving,
//! payoff cross-tables and parameter sweeps.

pub mod baseline;
pub mod commands;
pub mod crosstab;
pub mod error;
pub mod nvd;
pub mod report;
pub mod scenario;
pub mod sweep;

pub use error::CliError;
