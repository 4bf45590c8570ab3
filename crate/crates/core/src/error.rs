use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument violates the operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),
    /// A non-finite value, failed factorization or integrator breakdown.
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// The objective lacks an oracle the operation needs (prox, Hessian-vector product).
    #[error("missing capability: {0}")]
    Capability(String),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub(crate) fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }
}
