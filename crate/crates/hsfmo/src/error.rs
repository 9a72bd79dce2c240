use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("tensor outside the admissible interval: {0}")]
    Inadmissible(String),
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("multiplier bracket failure: {0}")]
    Bracket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
