//! Experiment runner for the variational-inference benchmarks: flat-file
//! configs in, deterministic CSV convergence traces out.

pub mod config;
pub mod csvio;
pub mod experiment;

pub use config::{load_config, parse_config_text, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, HarnessError};
