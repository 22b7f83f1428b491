use thiserror::Error;

/// Errors raised by model validation and the solvers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SoacError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("agent {agent}: {reason}")]
    InvalidFlow { agent: usize, reason: String },

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("enumeration budget of {budget} exceeded ({context})")]
    BudgetExceeded { budget: u64, context: String },

    #[error("invalid generator input: {0}")]
    InvalidGeneratorInput(String),
}

pub type Result<T> = std::result::Result<T, SoacError>;
