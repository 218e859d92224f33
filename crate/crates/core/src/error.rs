use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The environment's hard sample budget has been used up.
    #[error("sample budget exhausted")]
    BudgetExhausted,

    /// The adversary attempted a declaration with zero posterior probability.
    #[error("infeasible declaration on arm {arm:?} ({declaration}) at n={pulls}")]
    InfeasibleDeclaration {
        arm: Option<usize>,
        pulls: u64,
        declaration: String,
    },

    /// Conditioned sampling hit its retry cap on a batch too large to enumerate.
    #[error("conditioned sampling stalled after {retries} retries (batch size {batch_size})")]
    SamplingStalled { retries: u64, batch_size: u64 },

    /// A reservoir or parameter string could not be parsed.
    #[error("parse error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
