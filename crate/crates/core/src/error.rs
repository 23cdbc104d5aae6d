use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied a value outside an operation's domain.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Normalized entropy needs at least two distinct locations.
    #[error("degenerate location set: {0} distinct location(s), need at least 2")]
    Degenerate(usize),

    #[error("unknown origin {0}: no individual or collective row")]
    UnknownOrigin(String),

    #[error("statistic undefined: {0}")]
    UndefinedStatistic(String),

    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Malformed or inconsistent input data.
    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    /// Bad command-line usage or missing required inputs.
    #[error("usage error: {0}")]
    Usage(String),

    /// An internal consistency check failed; results must not be trusted.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Process exit status: 1 for usage and configuration problems, 2 for
    /// bad or insufficient data, 3 for failed invariants.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) | Error::InvalidInput(_) => 1,
            Error::Invariant(_) => 3,
            _ => 2,
        }
    }
}
