use thiserror::Error;

/// Errors raised by model construction, integration, and optimization.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("control value {u} outside admissible range [0, {u_max}]")]
    ControlOutOfRange { u: f64, u_max: f64 },

    #[error("negative state component ({s}, {i})")]
    NegativeState { s: f64, i: f64 },

    #[error("implicit step failed to converge at t = {t} after {iterations} iterations")]
    StepFailed { t: f64, iterations: usize },

    #[error("trajectory did not reach the eradication threshold before t = {horizon}")]
    HorizonExhausted { horizon: f64 },

    #[error("optimization failed at tau = {tau}: {source}")]
    Optimization {
        tau: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid terminal point: dI/dt = {rate} is not negative at the eradication time")]
    InvalidTerminal { rate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
