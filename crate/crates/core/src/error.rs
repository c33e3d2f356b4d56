use thiserror::Error;

/// Errors raised by channel construction, filtering, optimization and estimation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} of {what} is not stochastic (sum = {sum})")]
    NonStochasticRow { what: &'static str, row: usize, sum: f64 },
    #[error("state transition matrix is not irreducible")]
    Reducible,
    #[error("input constraint admits no input after history {history:?}")]
    DeadEndConstraint { history: Vec<usize> },
    #[error("parameter {name} = {value} outside [0, 1]")]
    ParameterOutOfRange { name: &'static str, value: f64 },
    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },
    #[error("window length {got} does not match expected {expected}")]
    WindowLengthMismatch { expected: usize, got: usize },
    #[error("letter {letter} out of range (alphabet size {size})")]
    LetterOutOfRange { letter: usize, size: usize },
    #[error("observation has zero probability under the model")]
    ImpossibleObservation,
    #[error("grid has {count} points, budget is {budget}")]
    GridTooLarge { count: u128, budget: u64 },
    #[error("policy space has {count} candidates, budget is {budget}")]
    PolicySpaceTooLarge { count: u128, budget: u64 },
    #[error("enumeration needs {count} terms, budget is {budget}")]
    EnumerationTooLarge { count: u128, budget: u64 },
    #[error("source shape (u={src_u}, v={src_v}, m={src_m}) inconsistent with requested (u={u}, v={v})")]
    DelayMismatch { src_u: usize, src_v: usize, src_m: usize, u: usize, v: usize },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("unknown constraint {0:?}")]
    UnknownConstraint(String),
    #[error("numerical leak: per-step term {0} outside sanity band")]
    NumericalLeak(f64),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
