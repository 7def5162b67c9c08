use std::path::PathBuf;

use crate::mbo::MboTrace;
use crate::optim::DescentResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("coordinate {index} = {value} lies outside [{lower}, {upper}]")]
    DomainViolation {
        index: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("finite-difference step at coordinate {index} would leave the domain")]
    BoundaryStep { index: usize },

    #[error("non-finite objective value or gradient after {} iterations", last.iterations)]
    NumericFailure { last: Box<DescentResult> },

    #[error("surrogate fit failed: {0}")]
    FitFailure(String),

    #[error("optimization run aborted after {} iterations: {source}", trace.records.len())]
    MboAborted { trace: Box<MboTrace>, source: Box<Error> },

    #[error("infill proposal failed: criterion non-finite at every candidate")]
    ProposalFailure,

    #[error("point set must not be empty")]
    EmptySet,

    #[error("unknown objective function {name:?} with dimension {dim}")]
    UnknownFunction { name: String, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed minima table at line {line}: {reason}")]
    MinimaTable { line: usize, reason: String },

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error("output {0} already exists (pass --force to overwrite)")]
    OutputExists(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
