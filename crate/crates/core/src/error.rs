//! Error type shared by all toolkit modules.

/// Toolkit-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid parameters, state, or configuration. The message lists every
    /// violation, not just the first.
    #[error("validation: {0}")]
    Validation(String),

    /// Arguments outside an operation's mathematical domain.
    #[error("domain: {0}")]
    Domain(String),

    /// Non-finite values where finite ones are required.
    #[error("evaluation: {0}")]
    Evaluation(String),

    /// Adaptive integration failed (step budget, step-size underflow).
    #[error("integration: {message} (last accepted t = {last_t})")]
    Integration { message: String, last_t: f64 },

    /// A state component left the non-negative region by more than the
    /// clamp width, indicating an integration or model defect.
    #[error("integrity: {0}")]
    Integrity(String),

    /// A least-squares fit did not converge within its restart budget.
    #[error("calibration: {0}")]
    Calibration(String),

    /// Malformed input data.
    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn evaluation(msg: impl Into<String>) -> Self {
        Error::Evaluation(msg.into())
    }
}
