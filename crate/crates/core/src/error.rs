use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at position {index}")]
    NonFinite { index: usize },

    #[error("vector set must contain at least one vector")]
    EmptySet,

    #[error("not a permutation: {0}")]
    InvalidPermutation(String),

    #[error("index {index} out of range for {len} examples")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("adversarial construction needs an even n >= 2, got {0}")]
    OddCount(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("self-balancing walk failed at step {step} after {attempts} attempt(s)")]
    BalancerFailure { step: usize, attempts: u32 },

    #[error("refusing to allocate {bytes} bytes of gradient storage (limit {limit})")]
    AllocationRefused { bytes: usize, limit: usize },

    #[error("non-finite loss at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
