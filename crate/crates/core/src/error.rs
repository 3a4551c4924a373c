use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// An object was used in a state that does not allow the call.
    #[error("invalid state: {0}")]
    State(String),

    /// NaN or infinity showed up where finite numbers are required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("cannot read image {path}: {message}")]
    Input { path: PathBuf, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Evaluation data leaked into training data.
    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
