use thiserror::Error;

/// Errors raised by kernel construction and evaluation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inputs live on incompatible spaces or have mismatched lengths.
    #[error("shape error: {0}")]
    Shape(String),

    /// The radial profile is not in the strictly positive definite class.
    #[error("profile class error: {0}")]
    ProfileClass(String),

    /// A feature map failed its injectivity check.
    #[error("injectivity error: {0}")]
    Injectivity(String),

    /// The base kernel of an L^p operator kernel is degenerate on the grid.
    #[error("non-degeneracy error: {0}")]
    NonDegeneracy(String),

    /// Non-finite values or overflow.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The requested combination is not supported.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
