//! Command-line front end for the `sirtoc` crate.

pub mod args;
pub mod config;
pub mod run;

use thiserror::Error;

/// Name of the environment variable capping the worker threads.
pub const WORKERS_ENV: &str = "SIRTOC_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation error: {0}")]
    Compute(#[from] sirtoc::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

/// Installs a global pool with at most `SIRTOC_WORKERS` threads.
pub fn configure_workers(value: Option<&str>) -> Result<(), CliError> {
    let Some(raw) = value else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Config(format!(
            "invalid `{WORKERS_ENV}`: expected a positive integer, got `{raw}`"
        ))
    })?;
    // a pool that is already installed keeps its size
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}
