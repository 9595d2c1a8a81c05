//! Scenario files, subcommands and reports. The only module doing I/O.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{cmd_check, cmd_example, cmd_solve, cmd_verify, ExampleVariant, SolveOutput, VerifyOptions};
pub use config::{LoadedConfig, ScenarioConfig};
pub use report::RunReport;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] crate::error::Error),

    #[error("report serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}
