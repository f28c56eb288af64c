use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] specel::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Artifacts were written but the solver stopped short of its tolerance.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 for bad input, 3 for solver non-convergence, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use specel::Error as E;
        match self {
            CliError::Parse { .. } | CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::InvalidGeometry(_) | E::InvalidArgument(_)) => 2,
            CliError::Core(E::NonConvergence { .. } | E::StepFailure { .. }) => 3,
            CliError::NotConverged(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
