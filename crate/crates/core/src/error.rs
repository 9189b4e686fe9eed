use thiserror::Error;

/// Errors raised by tensor construction, linear algebra, and model layers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Shape or dimension mismatch between operands.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// Numerical failure: non-finite values, non-convergence, domain violations.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Structurally invalid configuration (bad sizes, bad hyperparameters).
    #[error("config error: {0}")]
    Config(String),
    /// Checkpoint serialization or deserialization failure.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl CoreError {
    /// Prefixes the error message with a layer or operation identity so
    /// failures deep in a network are attributable.
    pub fn in_context(self, ctx: &str) -> CoreError {
        match self {
            CoreError::Dimension(m) => CoreError::Dimension(format!("{ctx}: {m}")),
            CoreError::Numeric(m) => CoreError::Numeric(format!("{ctx}: {m}")),
            CoreError::Config(m) => CoreError::Config(format!("{ctx}: {m}")),
            CoreError::Checkpoint(m) => CoreError::Checkpoint(format!("{ctx}: {m}")),
        }
    }
}
