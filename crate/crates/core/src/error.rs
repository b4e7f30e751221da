use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum HawkesError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A per-event intensity was zero, negative or non-finite where a
    /// logarithm is required.
    #[error("non-positive intensity {value} at entity {entity}, window {window}, event {event}")]
    NonPositiveIntensity {
        entity: usize,
        window: usize,
        event: usize,
        value: f64,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = HawkesError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(HawkesError::InvalidArgument(msg.into()))
}
