use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid value for {what}: {reason}")]
    InvalidValue { what: &'static str, reason: String },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("attack share is undefined when the total attack cost is zero")]
    UndefinedShare,

    #[error("total reward is not set; resolve the parameters against a total stake first")]
    MissingReward,

    #[error("SSP {0} has zero stake")]
    ZeroStakeSsp(usize),

    #[error("allocation is infeasible: {0}")]
    Infeasible(String),

    #[error("no coalition reaches the capture target for SSP {0}")]
    NoCoalition(usize),

    #[error("problem too large for exhaustive search: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("price data, line {line}: {reason}")]
    PriceData { line: u64, reason: String },

    #[error("unknown asset '{0}'")]
    UnknownAsset(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        what,
        reason: reason.into(),
    }
}
