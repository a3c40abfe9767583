use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("group sizes sum to {expected} but the matrix has {actual} columns")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("group {0} has size zero")]
    EmptyGroup(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("ELBO decreased from {previous} to {current} at cycle {cycle}")]
    DivergenceDetected {
        cycle: usize,
        previous: f64,
        current: f64,
    },

    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),

    #[error("fold {fold} has {size} rows, too few to fit")]
    FoldTooSmall { fold: usize, size: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("t = {t} lies outside the basis domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("subject {0} has no observations")]
    EmptyObservation(usize),

    #[error("G = {got} is too small, need at least {min}")]
    GTooSmall { got: usize, min: usize },

    #[error("K = {got} is too small, need at least {min}")]
    KTooSmall { got: usize, min: usize },

    #[error("group index {index} outside 1..={groups}")]
    IndexOutOfRange { index: usize, groups: usize },

    #[error("all {0} candidate fits failed")]
    AllFitsFailed(usize),
}
