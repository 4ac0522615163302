use thiserror::Error;

pub type Result<T> = std::result::Result<T, CrcError>;

/// Raised when the calibrated drift of a CIR path turns negative.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("inadmissible drift at step {step} (t = {t}): theta(0) = {theta0}, theta(delta) = {theta_delta}")]
pub struct AdmissibilityError {
    pub step: usize,
    pub t: f64,
    pub theta0: f64,
    pub theta_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CrcError {
    #[error("range error: {0}")]
    Range(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("state inconsistency: {0}")]
    State(String),
    #[error(transparent)]
    Admissibility(#[from] AdmissibilityError),
    #[error("estimator undefined: {0}")]
    EstimatorUndefined(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error at {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("no surviving paths in ensemble")]
    EmptyEnsemble,
}

impl CrcError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        CrcError::Io {
            path: path.as_ref().display().to_string(),
            msg: err.to_string(),
        }
    }
}
