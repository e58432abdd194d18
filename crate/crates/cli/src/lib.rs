//! Scenario files, sweeps and deterministic CSV/JSON output for the `rqed`
//! command-line tool.

pub mod config;
pub mod output;
pub mod run;

use thiserror::Error;

/// Failure classes of the command-line tool, each with its exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Convergence(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl From<rqed_core::Error> for CliError {
    fn from(err: rqed_core::Error) -> Self {
        if err.is_convergence() {
            CliError::Convergence(err.to_string())
        } else {
            CliError::Validation(err.to_string())
        }
    }
}
