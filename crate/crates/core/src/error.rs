use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A caller broke a pairing contract, e.g. backward pass on a forward
    /// state produced from different inputs.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("degenerate registration: {0}")]
    DegenerateRegistration(String),

    /// Binary or structured parse failure with the byte offset where it happened.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: u64, message: String },

    /// Line-oriented parse failure (1-based line number).
    #[error("parse error on line {line}: {message}")]
    ParseLine { line: usize, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        what: String,
        dump: Option<Box<crate::train::DiagnosticDump>>,
    },

    #[error("image error: {0}")]
    Image(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
