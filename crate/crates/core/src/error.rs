//! Error type shared by every module of the crate.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by model construction and the numerical routines.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Malformed input: dimension mismatch, infeasible allocation,
    /// non-Metzler matrix, inconsistent grouping and the like.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input outside the mathematical domain of the operation
    /// (e.g. non-persistent scenario where a positive equilibrium is required).
    #[error("domain error: {0}")]
    Domain(String),

    /// The operation is only derived for a restricted case
    /// (e.g. homogeneous patches) and the input falls outside it.
    #[error("unsupported case: {0}")]
    Unsupported(String),

    /// A numerical procedure failed to converge or broke down.
    /// `best` carries the best iterate seen, when one exists.
    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        best: Option<Vec<f64>>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            message: msg.into(),
            best: None,
        }
    }
}
