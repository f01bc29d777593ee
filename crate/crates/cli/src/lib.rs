//! Library surface of the command-line front end; the binary in `main.rs`
//! is a thin dispatcher over these modules.

pub mod ablate;
pub mod checks;
pub mod config;
pub mod error;
pub mod results;
pub mod runs;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
