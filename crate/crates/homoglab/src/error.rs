//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("incompatible resolution: {msg} (smallest compatible resolution: {suggestion})")]
    Resolution { msg: String, suggestion: usize },
    #[error("invalid coefficient field: {0}")]
    Coefficient(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("linear solve failed: {0}")]
    Solve(String),
    #[error("eigensolve failed: {0}")]
    Eigen(String),
    #[error("spectral function error: {0}")]
    Spectral(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
