use thiserror::Error;

/// Errors raised by the numerical layer and the generators.
///
/// Refusals of the self-test are not errors; they are reported through
/// [`crate::engine::Refusal`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("size limit exceeded: {what} = {value} > {limit}")]
    Size { what: &'static str, value: usize, limit: usize },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
