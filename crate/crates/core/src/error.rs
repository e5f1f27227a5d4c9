use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = NrhcError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NrhcError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// The parameter Hessian (or another matrix that must be inverted) is
    /// singular or too badly conditioned to solve against.
    #[error("singular Hessian: condition estimate {condition:e} exceeds cap {cap:e}")]
    SingularHessian { condition: f64, cap: f64 },

    #[error("numerical blowup: {0}")]
    NumericalBlowup(String),

    #[error("invalid configuration key `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("failed to parse config {path}: {message}")]
    ConfigParse { path: PathBuf, message: String },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("metrics window starting at t={t_from} contains no samples")]
    EmptyWindow { t_from: f64 },

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("step {step} (t={t:.4}) failed: {source}")]
    StepFailed {
        step: usize,
        t: f64,
        #[source]
        source: Box<NrhcError>,
    },
}

impl NrhcError {
    pub(crate) fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        NrhcError::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NrhcError::Io {
            path: path.into(),
            source,
        }
    }
}
