use thiserror::Error;

/// Error type shared by the whole crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible matrix/vector shapes.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A value outside its documented domain (negative probability, zero
    /// temperature, bad index, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An operation called out of order (e.g. backward before forward).
    #[error("invalid state: {0}")]
    State(String),

    /// A scenario/experiment configuration that fails validation.
    #[error("configuration error: {0}")]
    Config(String),

    /// A component asked to produce output before it has enough data.
    #[error("not ready: {0}")]
    NotReady(String),

    /// Malformed snapshot, config or CSV content.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
