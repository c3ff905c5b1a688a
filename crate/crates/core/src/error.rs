use thiserror::Error;

/// Error type shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// The physical model is inconsistent (for example an indefinite kernel).
    #[error("model error: {0}")]
    Model(String),

    /// A numerical procedure broke down (trace collapse, non-convergence).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Malformed structured input (config, CSV, trajectory dump).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
