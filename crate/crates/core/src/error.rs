use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DhmmError {
    #[error("transition matrix is not irreducible")]
    NonIrreducible,

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("parameter layout mismatch: expected {expected} values, got {got}")]
    LayoutMismatch { expected: usize, got: usize },

    #[error("observation outside the model's observation space: {0}")]
    DomainError(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation requires a {expected} model, got {got}")]
    WrongModelKind { expected: &'static str, got: &'static str },

    #[error("brute-force enumeration too large: {states}^{len} paths")]
    TooLarge { states: usize, len: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("every optimizer start ended at an infeasible or zero-likelihood point")]
    AllStartsFailed,

    #[error("objective returned NaN at theta = {theta:?}")]
    NonFinite { theta: Vec<f64> },

    #[error("finite-difference step leaves the parameter box at coordinate {coord}")]
    StepTooLarge { coord: usize },

    #[error("finite-difference change at coordinate {coord} is below the rounding noise floor")]
    StepBelowNoise { coord: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DhmmError {
    fn from(e: std::io::Error) -> Self {
        DhmmError::Io(e.to_string())
    }
}

impl From<csv::Error> for DhmmError {
    fn from(e: csv::Error) -> Self {
        DhmmError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DhmmError>;
