use thiserror::Error;

/// Errors raised anywhere in the tomography pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The principal matrix logarithm is undefined (an eigenvalue sits on the
    /// closed negative real axis). Callers may retry with finite differences.
    #[error("matrix logarithm branch failure: eigenvalue {re:.6e}{im:+.6e}i on the closed negative real axis (retry with the finite-difference extraction)")]
    BranchFailure { re: f64, im: f64 },

    #[error("incomplete data: missing conditioning outcomes {missing:?}")]
    IncompleteData { missing: Vec<usize> },

    #[error("homodyne efficiency {eta} is at or below the compensation threshold 1/2")]
    EfficiencyThreshold { eta: f64 },

    #[error("integration failed at t = {t:.6e} (step {step:.3e}): {reason}")]
    Integration { t: f64, step: f64, reason: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
