use thiserror::Error;

/// Errors produced by this crate.
///
/// `Config` covers bad parameters caught before any work starts (invalid
/// constellation size, non-positive tolerances, empty method lists).
/// `Domain` covers data that is structurally wrong at call time (dimension
/// mismatches, rank-deficient channels, symbols outside the alphabet).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
