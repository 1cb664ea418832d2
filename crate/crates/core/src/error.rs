use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Problem parameters that violate a model invariant.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// The iteration wandered outside the feasible region (Q <= 0, V <= 0, ...).
    #[error("infeasible state: {0}")]
    State(String),

    /// An iterative numerical routine failed.
    #[error("numerical failure in {context}: last iterate {last}, residual {residual:e}")]
    Numerical {
        context: String,
        last: f64,
        residual: f64,
    },

    /// Operation called with an unsupported combination of inputs.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn state(msg: impl Into<String>) -> Error {
    Error::State(msg.into())
}
