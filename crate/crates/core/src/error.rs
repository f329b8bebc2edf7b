use thiserror::Error;

/// Errors raised by the toolkit. Variants carry enough context to locate the
/// offending input without re-running anything.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("scale mismatch: expected scale {expected}, found {found}")]
    ScaleMismatch { expected: u8, found: u8 },

    #[error("{what} is not snapped to the 2^-{n} lattice")]
    NotSnapped { what: String, n: u8 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain is unbounded")]
    Unbounded,

    #[error("domain is empty")]
    EmptyDomain,

    #[error("consecutive vertices at index {0} are not lattice neighbours")]
    NotNearestNeighbour(usize),

    #[error("path is not simple: vertex at index {0} repeats an earlier vertex")]
    NotSimple(usize),

    #[error("step cap of {0} exhausted before the stopping rule fired")]
    StepCapExhausted(u64),

    #[error("rejection sampler gave up after {0} attempts")]
    RejectionExhausted(u64),

    #[error("index {index} out of range for a path of length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("decode error at byte {offset}: {reason}")]
    Decode { offset: usize, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}

pub(crate) fn precondition<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Precondition(msg.into()))
}
