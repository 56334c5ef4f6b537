//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer dimensions do not compose.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A configuration value is missing, unknown, or out of range.
    #[error("invalid config: {0}")]
    Config(String),
    /// An operation was called outside its preconditions.
    #[error("contract violation: {0}")]
    Contract(String),
    /// NaN or infinity surfaced in data, gradients, or losses.
    #[error("numerical fault: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("config parse error: {0}")]
    TomlDe(#[from] toml::de::Error),
    #[error("config encode error: {0}")]
    TomlSer(#[from] toml::ser::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
