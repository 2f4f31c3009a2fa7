use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: map acts on T^{expected}, got a point of T^{got}")]
    Dimension { expected: usize, got: usize },

    #[error("{0} requires an unperturbed skew product f_N")]
    NotSkew(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unknown check id `{0}`")]
    UnknownCheck(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
