use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field has no interior nodes")]
    NoInteriorNodes,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("outside domain: {0}")]
    OutsideDomain(String),
    #[error("infeasible boundary data: {0}")]
    InfeasibleData(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("empty set: {0}")]
    EmptySet(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
