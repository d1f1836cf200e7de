//! Config-driven experiment runner for the `hitl` command.
//!
//! A JSON config names one mode; [`run::run_experiment`] executes it and
//! writes CSV, JSON and SVG artifacts into the configured output directory.

pub mod config;
pub mod error;
pub mod plot;
pub mod run;

pub use config::{load_config, ExperimentConfig, Mode, Overrides};
pub use error::{CliError, FieldError};
pub use run::{run_experiment, Artifacts, Command};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "HITL_WORKERS";

/// Size the global worker pool from [`WORKERS_ENV`], if set.
pub fn configure_workers() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| CliError::Validation(vec![FieldError::new(WORKERS_ENV, "an integer >= 1")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(vec![FieldError::new(WORKERS_ENV, e.to_string())]))
}
