use thiserror::Error;

/// Errors produced anywhere in the clustering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("eigensolver did not converge after {iterations} iterations (max residual {max_residual:e})")]
    NoConvergence {
        iterations: usize,
        residuals: Vec<f64>,
        max_residual: f64,
    },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate candidate: {0}")]
    DegenerateCandidate(String),

    #[error("search failed: every candidate was degenerate ({})", .candidates.join("; "))]
    SearchFailed { candidates: Vec<String> },

    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
