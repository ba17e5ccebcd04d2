use thiserror::Error;

/// Errors produced by the model, simulator and optimizers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("body-foot separation {gap} is not positive")]
    DegenerateGap { gap: f64 },

    #[error("integrator failed at tau = {tau}: {reason}")]
    StepFailure { tau: f64, reason: String },

    #[error("non-finite state at tau = {tau}")]
    NonFinite { tau: f64 },

    #[error("no feasible solution: {0}")]
    Infeasible(String),

    #[error("outcome has no rest state: {0}")]
    NotSettled(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
