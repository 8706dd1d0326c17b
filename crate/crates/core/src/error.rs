use thiserror::Error;

/// Errors raised by the library. Failed inequality checks are not errors;
/// they are reported through pass flags on [`crate::report::ExperimentReport`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {order} exceeds the supported maximum {max}")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("phase is not positive at s = {s} (value {value})")]
    Sign { s: f64, value: f64 },

    #[error("cannot fit a decay rate: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
