use thiserror::Error;

/// Errors raised by the spectral element library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("{} target point(s) outside the domain, first: {:?}", .0.len(), .0.first())]
    OutOfDomain(Vec<[f64; 2]>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("step failure at t = {t:.6e}: step size {dt:.3e} below minimum ({reason})")]
    StepFailure { t: f64, dt: f64, reason: String },

    #[error("no convergence after {iterations} iterations (last error {last_error:.3e})")]
    NonConvergence { iterations: usize, last_error: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
