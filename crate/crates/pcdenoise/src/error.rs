use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the pipeline and CLI.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] pcdenoise_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: u64, detail: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const DATA: i32 = 2;
    pub const NUMERIC: i32 = 3;
}

impl PipelineError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        use pcdenoise_core::Error as E;
        match self {
            Self::Config(_) => exit::USAGE,
            Self::NonFinite { .. } => exit::NUMERIC,
            Self::Core(E::NonFinite(_)) => exit::NUMERIC,
            Self::Core(E::InvalidArgument(_)) => exit::USAGE,
            _ => exit::DATA,
        }
    }
}
