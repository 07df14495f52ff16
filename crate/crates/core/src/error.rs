use thiserror::Error;

/// Errors produced by model construction and the three solver backends.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    #[error("integration failed at t = {t:e} (step {step:e}, {steps} steps taken): {reason}")]
    IntegrationFailure {
        t: f64,
        step: f64,
        steps: usize,
        reason: String,
    },

    #[error("state invariant violated at t = {t:e}: {reason}")]
    InvariantViolation { t: f64, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
