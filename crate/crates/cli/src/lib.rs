//! Declarative experiment runner for the chemoscale solvers: config files,
//! the built-in presets, CSV artifacts and sweeps.

pub mod config;
pub mod error;
pub mod io;
pub mod presets;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use runner::{run, RunStatus, RunSummary};
