use thiserror::Error;

use crate::params::ValidityReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value for `{0}`")]
    NonFinite(&'static str),

    #[error("invalid protocol parameters: {0}")]
    InvalidParams(ValidityReport),

    #[error("series does not converge: {0}")]
    NonConvergent(String),

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
