//! Configuration, execution and reporting around `fedamp-core`.

pub mod commands;
pub mod config;
pub mod demo;
pub mod metrics;
pub mod plot;
pub mod resolve;
pub mod seeds;

use std::fmt;

/// A command failure, split by exit code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad or unreadable input. Exit code 1.
    Config(String),
    /// Divergence or a failed check. Exit code 2.
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Failure(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Failure(m) => write!(f, "failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<fedamp_core::Error> for CliError {
    fn from(e: fedamp_core::Error) -> Self {
        match e {
            fedamp_core::Error::Diverged { .. } => CliError::Failure(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

pub(crate) fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}
