use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("insufficient solver coverage: {0}")]
    Coverage(String),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("{0} acceptance criteria failed")]
    Acceptance(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Coverage(_) => 3,
            CliError::Bracket(_) => 4,
            CliError::Solver(_) => 5,
            CliError::Io { .. } | CliError::Format(_) | CliError::Acceptance(_) => 1,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<rollscape_core::Error> for CliError {
    fn from(e: rollscape_core::Error) -> Self {
        match e {
            rollscape_core::Error::NoSignChange { .. } => CliError::Bracket(e.to_string()),
            other => CliError::Solver(other.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
