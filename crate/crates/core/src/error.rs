use std::io;

use thiserror::Error;

/// Broad failure classes, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("malformed input at {location}: {reason}")]
    Format { location: String, reason: String },

    #[error("duplicate token `{token}` at {location}")]
    DuplicateToken { token: String, location: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("token index {index} out of range for vocabulary of {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("code {code} at token {token}, codebook {codebook} is not below K={k}")]
    CodeOutOfRange {
        token: usize,
        codebook: usize,
        code: u32,
        k: usize,
    },

    #[error("unknown token `{0}` and no UNK token configured")]
    UnknownToken(String),

    #[error("token `{0}` has a zero-norm embedding; cosine neighbours are undefined")]
    ZeroNorm(String),

    #[error("no {kind} registered under `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("non-finite loss at batch row {row}")]
    NonFiniteLoss { row: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        trace: Vec<f64>,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig { .. } | Error::UnknownStrategy { .. } => ErrorKind::Usage,
            Error::NonFiniteLoss { .. } | Error::Diverged { .. } => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(location: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
