use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the testbed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layout mismatch: {0}")]
    Layout(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("invalid model spec: {0}")]
    Spec(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("unrecognized gradient structure: {0}")]
    Structure(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("inversion failed: {0}")]
    Divergence(String),

    #[error("invalid config: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Config(Vec<FieldError>),

    #[error("missing artifact {}: {reason}", .path.display())]
    MissingArtifact { path: PathBuf, reason: String },

    #[error("digest mismatch: {0}")]
    DigestMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One field-level diagnostic from config validation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
