//! Command-line driver: scenario configs in, CSV and JSON artifacts out.

pub mod config;
pub mod error;
pub mod export;
pub mod output;
pub mod run;

pub use error::{CliError, Result};
