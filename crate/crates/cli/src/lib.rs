//! Config-driven experiments over `stacklab-core`.
//!
//! [`run`] is what the `stacklab` binary calls: parse the config, run the
//! experiment, write the artifacts and a manifest of their hashes.

pub mod config;
pub mod error;
pub mod experiment;
pub mod output;

use std::path::PathBuf;

pub use config::{Experiment, ExperimentConfig, Overrides};
pub use error::RunError;
pub use experiment::{montecarlo_chacon, montecarlo_wmix, run_experiment, MonteCarloSummary, RunOutput};

/// Reads the config at `path`, runs it and writes the outputs. Returns the
/// manifest path.
pub fn run(config_path: &std::path::Path, overrides: &Overrides) -> Result<PathBuf, RunError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| RunError::Config(format!("cannot read config {}: {e}", config_path.display())))?;
    let cfg = ExperimentConfig::from_json_str(&text, overrides)?;
    let out = run_experiment(&cfg)?;
    output::write_outputs(&cfg.output_path, &cfg, &out)
}
