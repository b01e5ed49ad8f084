//! Monte Carlo experiments on top of `eotrack-core`: run configuration
//! files, parallel realizations over the estimator modes, and CSV output.

pub mod config;
pub mod harness;
pub mod output;

use std::path::PathBuf;

pub use config::{ConfigError, DivergenceRule, Profile, RunSpec};
pub use harness::{run_experiment, Experiment, ModeResult, ResultTable};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] eotrack_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
