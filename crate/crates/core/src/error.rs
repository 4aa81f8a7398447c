use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, KcrError>;

#[derive(Debug, Error)]
pub enum KcrError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("degenerate kernel: {0}")]
    DegenerateKernel(String),

    #[error("gradient descent diverged at iteration {iteration} (residual {residual:e}); reduce the step size")]
    StepSize { iteration: usize, residual: f64 },

    #[error("feature bank is stale: valid for epoch {found:?}, needed for epoch {expected}")]
    StaleBank { expected: usize, found: Option<usize> },

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("{phase} phase failed at epoch {epoch}: {source}")]
    Pipeline {
        phase: String,
        epoch: usize,
        #[source]
        source: Box<KcrError>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl KcrError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KcrError::Io { path: path.into(), source }
    }

    /// Process exit code: 1 validation, 2 numeric, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            KcrError::Dimension(_)
            | KcrError::Argument(_)
            | KcrError::Config(_)
            | KcrError::Parse { .. }
            | KcrError::Schema(_)
            | KcrError::Json(_) => 1,
            KcrError::Numeric(_)
            | KcrError::DegenerateKernel(_)
            | KcrError::StepSize { .. }
            | KcrError::StaleBank { .. } => 2,
            KcrError::Io { .. } => 3,
            KcrError::Pipeline { source, .. } => source.exit_code(),
        }
    }
}
