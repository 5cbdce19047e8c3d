use std::io;

use thiserror::Error;

/// Errors surfaced by the segmentation engine and the evaluation harness.
#[derive(Debug, Error)]
pub enum Error {
    /// An input value was rejected (e.g. a non-finite measurement).
    #[error("invalid input: {0}")]
    Input(String),

    /// An operation was invoked in a state that cannot serve it.
    #[error("invalid state: {0}")]
    State(String),

    /// A configuration value violates its documented invariant.
    #[error("invalid config: {0}")]
    Config(String),

    /// A data file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A change-point sink refused delivery.
    #[error("delivery failed: {0}")]
    Delivery(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn state(msg: impl Into<String>) -> Self {
        Error::State(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
