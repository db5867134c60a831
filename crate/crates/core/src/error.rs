//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by measure construction, numerical kernels and scans.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a structural invariant (named in the message).
    #[error("validation error: {0}")]
    Validation(String),

    /// A value was requested outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integrand evaluated to a non-finite value inside its domain.
    #[error("non-integrable integrand near x = {at}: {what}")]
    NonIntegrable { at: f64, what: String },

    /// An iterative solver hit its iteration cap.
    #[error("{solver} failed to converge after {iterations} iterations: {detail}")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        detail: String,
    },

    /// Matrix/vector shapes do not match.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
