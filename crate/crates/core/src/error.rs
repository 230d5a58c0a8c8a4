use std::io;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, sizes or settings that cannot work together.
    #[error("configuration error: {0}")]
    Config(String),
    /// An operation called out of order (stepping a finished episode, predicting
    /// with an untrained model, training on an empty buffer, ...).
    #[error("usage error: {0}")]
    Usage(String),
    /// Non-finite values or diverging optimisation.
    #[error("training error: {0}")]
    Training(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}
