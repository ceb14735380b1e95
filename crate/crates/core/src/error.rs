use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A constructor or operation received parameters outside their domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An index lies outside the grid, or index arithmetic would overflow.
    #[error("index out of range: {0}")]
    Range(String),

    /// A non-finite value appeared during evaluation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A structured matrix could not be built from the given description.
    #[error("construction failed: {0}")]
    Construction(String),

    /// The caller asked for something the instance does not provide.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is singular to working precision: {0}")]
    Singular(String),

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn range(msg: impl Into<String>) -> Error {
    Error::Range(msg.into())
}
