use thiserror::Error;

/// Errors produced by the samplers, couplers and file readers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// An inverse-density evaluation could not bracket or converge.
    #[error("inverse density evaluation failed at y = {y}")]
    Numeric { y: f64 },

    #[error("no coalescence within {limit} {unit}")]
    NonCoalescence { limit: u64, unit: &'static str },

    #[error("model error: {0}")]
    Model(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
