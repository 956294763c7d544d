//! Experiment harness for `shelab-core`: configuration, deterministic
//! ensembles, CSV/JSON/SVG output and the `shelab` command line.
//!
//! A run is `config -> Report -> files`. [`run`] does the first two steps and
//! [`report::write_outputs`] the last, so tests can inspect a [`Report`]
//! without touching the file system.

#![warn(rust_2018_idioms, missing_debug_implementations)]

use std::path::PathBuf;

pub mod config;
pub mod ensemble;
pub mod experiments;
pub mod noise_io;
pub mod plot;
pub mod report;

pub use config::{Config, Overrides, Subcommand};
pub use report::Report;

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    /// Blow-ups beyond the quota, quadrature failures and the like.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl LabError {
    /// Core errors raised while validating a configuration.
    pub fn from_core(e: shelab_core::Error) -> Self {
        LabError::Validation(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            LabError::Validation(_) | LabError::Io { .. } => 1,
            LabError::Numerical(_) => 2,
        }
    }
}

/// Core errors raised during a computation.
impl From<shelab_core::Error> for LabError {
    fn from(e: shelab_core::Error) -> Self {
        LabError::Numerical(e.to_string())
    }
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_ASSERTION: u8 = 3;

/// Runs the configured subcommand on a pool of `threads` workers (all cores
/// when `None`). The thread count never changes the result.
pub fn run(config: &Config, threads: Option<usize>) -> Result<Report, LabError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| LabError::Numerical(format!("thread pool: {e}")))?;
    pool.install(|| experiments::dispatch(config))
}
