//! Crate-wide error type.
//!
//! Variants are grouped by failure class so callers (in particular the CLI)
//! can map them onto stable exit codes: I/O, validation, numeric divergence,
//! degenerate labels.

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: String, reason: String },

    #[error("format version mismatch in {path}: found {found}, expected {expected}")]
    VersionMismatch { path: String, found: u32, expected: u32 },

    #[error("schema fingerprint mismatch: checkpoint was trained against a different schema")]
    SchemaFingerprintMismatch,
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Stable failure class used by the CLI for exit codes.
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::CorruptFile { .. } => ErrorClass::Io,
            Error::Validation(_)
            | Error::VersionMismatch { .. }
            | Error::SchemaFingerprintMismatch => ErrorClass::Validation,
            Error::Divergence { .. } => ErrorClass::Divergence,
            Error::DegenerateLabels(_) => ErrorClass::DegenerateLabels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Divergence,
    DegenerateLabels,
}
