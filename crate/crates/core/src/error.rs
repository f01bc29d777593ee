//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by dataset construction, policy evaluation, losses and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input data (bad token ids, empty sequences, missing scores, ...).
    #[error("input error: {0}")]
    Input(String),

    /// Invalid or inconsistent configuration (shape mismatches, bad hyper-parameters).
    #[error("config error: {0}")]
    Config(String),

    /// A non-finite value showed up mid-computation. `pair` / `step` locate it
    /// when the failure happened inside a batch reduction or a training loop.
    #[error("numerical error: {msg}{}{}",
        pair.map(|p| format!(" (pair {p})")).unwrap_or_default(),
        step.map(|s| format!(" (step {s})")).unwrap_or_default())]
    Numerical {
        msg: String,
        pair: Option<usize>,
        step: Option<usize>,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed file contents (dataset records, checkpoints).
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            msg: msg.into(),
            pair: None,
            step: None,
        }
    }

    pub fn numerical_at_pair(msg: impl Into<String>, pair: usize) -> Self {
        Error::Numerical {
            msg: msg.into(),
            pair: Some(pair),
            step: None,
        }
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
