//! Error type shared by every module of the crate.

use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("RU count {0} is not a perfect square; a uniform grid needs one")]
    NonSquareRuCount(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("negative SINR {0} passed to SE conversion")]
    NegativeSinr(f64),

    #[error("total allocated power is zero; energy efficiency undefined")]
    ZeroPower,

    #[error("feature standard deviation {std} at entry {index} is degenerate")]
    DegenerateStd { index: usize, std: f64 },

    #[error("MMF bisection did not converge: bracket width {width:e} after {iterations} iterations")]
    NoConvergence { iterations: usize, width: f64 },

    #[error("MMF feasibility model infeasible at target {0}")]
    InfeasibleModel(f64),

    #[error("MMF solver failed on sample {index}: {reason}")]
    SolverFailure {
        index: usize,
        reason: String,
        beta_db: Vec<f64>,
    },

    #[error("training loss diverged at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("index {index} out of range 0..{bound}")]
    IndexOutOfRange { index: usize, bound: usize },

    #[error("perturbation breaks its budget: {0}")]
    BudgetViolation(String),

    #[error("empty sample set")]
    EmptySamples,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn shape_mismatch(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
