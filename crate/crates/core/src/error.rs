use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported number of collocation nodes: {0} (supported: 2..=12)")]
    NodeCount(usize),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("singular implicit solve: mode with |k|^2 = {k2} has zero diagonal")]
    SingularMode { k2: f64 },

    #[error("newton iteration did not converge at node {node}, point {point} (|dx| = {correction:e})")]
    NewtonFailure {
        node: usize,
        point: usize,
        correction: f64,
    },

    #[error("sweeper configuration: {0}")]
    Sweeper(String),

    #[error("level hierarchy: {0}")]
    Hierarchy(String),

    #[error("time decomposition: {0}")]
    Decomposition(String),

    #[error("communication failure: {0}")]
    Communication(String),

    #[error("solver aborted: {0}")]
    Aborted(String),

    #[error("problem setup: {0}")]
    Problem(String),

    #[error("gradient strategy: {0}")]
    Strategy(String),

    #[error("zero denominator in beta rule {0}")]
    BetaDenominator(&'static str),

    #[error("line search failed after {0} trials")]
    LineSearch(usize),

    #[error("search direction is not a descent direction (slope {0:e})")]
    NotDescent(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("snapshot format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
