//! Error type shared by the whole crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transition row {row} sums to {sum:e}, expected 1 within {tol:e}")]
    RowNotStochastic { row: usize, sum: f64, tol: f64 },

    #[error("probability vector sums to {sum:e}, expected 1 within {tol:e}")]
    NotNormalized { sum: f64, tol: f64 },

    #[error("negative probability {value:e} at index {index}")]
    NegativeProbability { index: usize, value: f64 },

    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("{what} must be {requirement}, got {value}")]
    InvalidArgument {
        what: &'static str,
        requirement: &'static str,
        value: f64,
    },

    #[error("no convergence after {iters} iterations, residual {residual:e}")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("record {index} out of range: state {state}, action {action} for {n_states}x{n_actions} space")]
    RecordOutOfRange {
        index: usize,
        state: usize,
        action: usize,
        n_states: usize,
        n_actions: usize,
    },

    #[error("absolute continuity violated at index {index}: q={q:e} where p=0")]
    AbsoluteContinuity { index: usize, q: f64 },

    #[error("{divergence} conjugate undefined at y={y:e} (domain requires y < {limit:e})")]
    ConjugateDomain {
        divergence: &'static str,
        y: f64,
        limit: f64,
    },

    #[error("unknown {kind} name {name:?}")]
    UnknownName { kind: &'static str, name: String },

    #[error("sampling distribution is zero on states the data visits: {states:?}")]
    ZeroSupport { states: Vec<usize> },

    #[error("behavior policy assigns zero probability to record {record} (state {state}, action {action})")]
    ZeroBehaviorProbability {
        record: usize,
        state: usize,
        action: usize,
    },

    #[error("objective diverged at step {step}: J = {value:e}")]
    Diverged { step: usize, value: f64 },

    #[error("per-record values have non-positive mean {mean:e}; cannot self-normalize")]
    NonPositiveMean { mean: f64 },

    #[error("dataset has no trajectory structure (fixed horizon) required by this estimator")]
    MissingTrajectoryStructure,

    #[error("edge list {path}: line {line}: {message}")]
    EdgeListParse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("edge list {path} contains no edges")]
    EmptyEdgeList { path: String },

    #[error("duplicate edge ({src}, {dst})")]
    DuplicateEdge { src: usize, dst: usize },

    #[error("dense solve limited to {limit} states, got {n}; use the iterative trainer for larger systems")]
    TooLargeForDenseSolve { n: usize, limit: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
