//! Experiment plumbing around the `lossnet` simulator: sweep configuration,
//! parallel sweeps with exact threshold rows, slope fits against `ln N`,
//! coupling reports and plain-text outputs.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod couple;
pub mod exact;
pub mod fit;
pub mod sweep;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "LOSSNET_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}", path = .0.display(), source = .1)]
    Io(PathBuf, #[source] std::io::Error),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("cell failed: {0}")]
    Cell(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(..) => "io",
            CliError::Csv(_) => "csv",
            CliError::Fit(_) => "fit",
            CliError::Cell(_) => "cell",
        }
    }
}

/// Worker count from the environment, else the number of available cores.
pub fn workers_from_env() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
