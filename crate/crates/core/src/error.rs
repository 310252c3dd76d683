use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violates a precondition (bad parameters, inadmissible end state).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Evaluation point outside the declared working domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// A singular configuration was hit (vanishing denominator, degenerate basis).
    #[error("singular: {0}")]
    Singular(String),

    /// The profile continuation or Newton solve did not produce a connection.
    #[error("no connection: {0}")]
    NoConnection(String),

    /// Diagnosed numerical failure (non-convergence, overflow, blow-up).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures caused by the caller's input rather than the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::InvalidInput(_) | Error::Domain(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
