use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum HawkesError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("parameters are not stationary: spectral radius of the branching ratio is {radius:.6}")]
    Stationarity { radius: f64 },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("inconsistent latent sample: {0}")]
    Consistency(String),
    #[error("all importance log-weights are -inf")]
    DegenerateWeights,
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
}

impl HawkesError {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        HawkesError::Argument(msg.into())
    }
}

impl From<std::io::Error> for HawkesError {
    fn from(e: std::io::Error) -> Self {
        HawkesError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, HawkesError>;
