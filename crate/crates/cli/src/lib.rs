//! Batch front door for `klslab`: config parsing, seeded orchestration and
//! report emission.
//!
//! Exit codes: 0 when nothing failed (flags allowed), 1 when a hard gate
//! failed, 2 for usage, config and runtime errors.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod suites;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{Command, ExperimentConfig, Suite};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: {source}")]
    Config { path: String, source: config::ConfigError },

    #[error(transparent)]
    Lab(#[from] klslab::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl std::error::Error for config::ConfigError {}

impl CliError {
    /// Every error is a usage-class failure.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    ExperimentConfig::parse(&text).map_err(|source| CliError::Config { path: path.display().to_string(), source })
}

/// Runs one subcommand and returns its exit code.
pub fn run(command: Command, config: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<i32, CliError> {
    let cfg = load_config(config)?;
    let master = seed.unwrap_or(cfg.seed);
    let out = commands::output_dir(out, &cfg);
    let out = out.as_deref();
    match command {
        Command::Simulate => commands::simulate(&cfg, master, out),
        Command::Verify => commands::verify(&cfg, master, out),
        Command::Bounds => commands::bounds(&cfg, out),
        Command::Report => commands::report(&cfg, master, out),
    }
}

/// Caps rayon's global pool from `KLSLAB_THREADS`, if set.
pub fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("KLSLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CliError::Usage(format!("KLSLAB_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(CliError::Usage("KLSLAB_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}
