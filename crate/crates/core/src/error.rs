//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Text could not be parsed; `field` names the offending component.
    #[error("parse error in {field}: {message}")]
    Parse { field: String, message: String },

    /// A CSV row could not be ingested.
    #[error("row {row}: {message}")]
    Ingest { row: usize, message: String },

    /// A configuration value is out of range or inconsistent.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Input data violates a precondition.
    #[error("{0}")]
    Data(String),

    /// A computation produced a non-finite value.
    #[error("numerical overflow in {context}")]
    Numeric { context: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn data(message: impl Into<String>) -> Self {
        Error::Data(message.into())
    }

    pub fn parse(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
