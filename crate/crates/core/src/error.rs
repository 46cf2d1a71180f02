use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates the constraint of its owning type.
    #[error("invalid parameter `{name}`: {constraint}")]
    InvalidParameter { name: &'static str, constraint: String },

    #[error("field is in {found} representation, expected {expected}")]
    Representation {
        expected: &'static str,
        found: &'static str,
    },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("reversed interval: s = {s} > t = {t}")]
    ReversedInterval { s: f64, t: f64 },

    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite field value at t = {time} (step {step})")]
    NonFinite { time: f64, step: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("averaged run blew up at t = {time} before the horizon {horizon}; choose a shorter horizon")]
    AveragedBlowup { time: f64, horizon: f64 },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {found:#018x}")]
    BadMagic { found: u64 },
    #[error("file written with opposite byte order")]
    CrossEndian,
    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid header: {0}")]
    Header(String),
}

pub(crate) fn invalid(name: &'static str, constraint: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        constraint: constraint.into(),
    }
}
