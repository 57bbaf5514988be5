use thiserror::Error;

use crate::datasets::wav::WavError;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor shape did not match what an operation requires.
    #[error("dimension mismatch in {op}: axis {axis} expected {expected}, got {got}")]
    Dimension {
        op: &'static str,
        axis: String,
        expected: String,
        got: String,
    },

    /// A precondition of an operation was violated.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Wav(#[from] WavError),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("non-finite loss; first non-finite output produced by layer {layer}")]
    NonFiniteLoss { layer: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("unknown property `{0}`")]
    UnknownProperty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(
        op: &'static str,
        axis: impl Into<String>,
        expected: impl ToString,
        got: impl ToString,
    ) -> Self {
        Error::Dimension {
            op,
            axis: axis.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
