use thiserror::Error;

/// Errors raised by spectrum construction, bound evaluation and the estimator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input sequence violated a structural invariant at a specific index.
    #[error("invalid {what} at index {index}: {reason}")]
    Validation {
        what: &'static str,
        index: usize,
        reason: String,
    },

    /// A parameter was outside the range its formula is defined on.
    #[error("{context}: {detail}")]
    Domain {
        context: &'static str,
        detail: String,
    },

    /// The split index does not leave a usable tail.
    #[error("split index k = {k} out of range (must be < {limit})")]
    KOutOfRange { k: usize, limit: usize },

    /// `λI_n + XXᵀ` (or a tail block of it) is not positive definite.
    #[error(
        "system is not positive definite: smallest eigenvalue {min_eigenvalue:e} \
         is below the tolerance {tolerance:e} (regularization too negative?)"
    )]
    NotPositiveDefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(context: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            context,
            detail: detail.into(),
        }
    }
}
