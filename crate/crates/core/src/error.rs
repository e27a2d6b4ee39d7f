use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported gate `{0}`")]
    UnsupportedGate(String),

    #[error("routing required: qubits {0} and {1} are not coupled")]
    RoutingRequired(u32, u32),

    #[error("capacity exceeded: {used} qubits used, at most {limit} supported")]
    Capacity { used: usize, limit: usize },

    #[error("degenerate noise model: {0}")]
    DegenerateModel(String),

    #[error("rejected swap: {0}")]
    RejectedSwap(String),

    #[error("pattern database format version {found} is not supported (expected {expected})")]
    Migration { found: u32, expected: u32 },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
