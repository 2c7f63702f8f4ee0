use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("sector violation in branch {branch}, axis {axis}: x = {sample:e} gives x*r(x) = {product:e}")]
    SectorViolation {
        branch: usize,
        axis: char,
        sample: f64,
        product: f64,
    },

    #[error("block assembly error: {0}")]
    Assembly(String),

    #[error("numeric abort at t = {time:e} s: {reason}")]
    NumericAbort { time: f64, reason: String },

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    #[error("certificate does not match: {0}")]
    Mismatch(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),
}

impl Error {
    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
