use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A modelling assumption (e.g. no weakly dominated actions) does not hold.
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    /// A learner was driven out of order or with the wrong kind of feedback.
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("lp solver: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
