//! Experiment runner for unlearning studies: deletion-distribution effects,
//! efficiency / effectiveness / certifiability trade-offs, and pipeline
//! simulation with audits. Results are emitted as CSV or JSON lines.

pub mod config;
pub mod data;
pub mod error;
pub mod lifecycle;
pub mod output;
pub mod study;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
