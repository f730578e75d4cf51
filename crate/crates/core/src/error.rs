use thiserror::Error;

#[derive(Debug, Error)]
pub enum AcssError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parameter outside the model domain: {0}")]
    Domain(String),
    #[error("point violates constraint row {row} by {excess:e}")]
    InfeasiblePoint { row: usize, excess: f64 },
    #[error("constraint system has no feasible point")]
    InfeasibleProblem,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("proposal tuning failed: {0}")]
    TuningFailed(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("numerical failure: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AcssError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AcssError {
    AcssError::InvalidArgument(msg.into())
}
