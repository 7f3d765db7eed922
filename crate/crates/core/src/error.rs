use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid system dimensions: {0}")]
    InvalidDims(String),
    #[error("invalid constellation: {0}")]
    InvalidConstellation(String),
    #[error("pilot length {0} is not a power of two")]
    PilotLengthNotPowerOfTwo(usize),
    #[error("pilot length {pilot_len} exceeds the number of UEs {ues}")]
    PilotLongerThanUes { pilot_len: usize, ues: usize },
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    DimensionMismatch {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("singular system in {0}")]
    Singular(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("channel matrix has zero norm")]
    ZeroNormChannel,
    #[error("empty sample set")]
    EmptySamples,
    #[error("non-finite message in iteration {iteration}, phase {phase}")]
    NonFinite { iteration: usize, phase: &'static str },
}

pub type Result<T> = core::result::Result<T, Error>;
