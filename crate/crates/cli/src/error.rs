//! CLI error type carrying the process exit code.
//!
//! Exit codes: 0 success, 1 invariant/check or runtime failure,
//! 2 configuration error.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("check failure: {0}")]
    Check(String),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Check(_) | CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

impl From<rainbow_core::Error> for CliError {
    fn from(err: rainbow_core::Error) -> Self {
        use rainbow_core::Error as E;
        match err {
            // Bad user inputs (configs, datasets, shapes) exit with 2.
            E::Config(_) | E::Input(_) | E::Format(_) => CliError::Config(err.to_string()),
            E::Numerical { .. } | E::Io(_) => CliError::Runtime(err.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
