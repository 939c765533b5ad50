use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("transition row (s={state}, a={action}) is not a probability vector: {reason}")]
    KernelRow {
        state: usize,
        action: usize,
        reason: String,
    },

    #[error("initial distribution is not a probability vector: {0}")]
    InitialDistribution(String),

    #[error("discount factor must lie in (0, 1), got {0}")]
    Discount(f64),

    #[error("policy row {state} is not a probability vector: {reason}")]
    PolicyRow { state: usize, reason: String },

    #[error("policy is not deterministic")]
    NotDeterministic,

    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("step size {name}={value} outside the admissible range {range}")]
    StepSize {
        name: &'static str,
        value: f64,
        range: String,
    },

    #[error("invalid parameter {name}={value}: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("linear system is numerically singular ({0})")]
    Singular(&'static str),

    #[error("degenerate update skipped ({0})")]
    DegenerateUpdate(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("insufficient data: {needed} qualifying points needed, {found} found")]
    InsufficientData { needed: usize, found: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
