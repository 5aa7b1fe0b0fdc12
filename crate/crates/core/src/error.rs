use thiserror::Error;

use crate::model::ModelError;

/// Errors produced by the solver layers above the raw model.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Model(#[from] ModelError),

    /// The simplex kernel failed to reach an optimum. Carries enough context
    /// to reconstruct the offending subproblem.
    #[error("linear program failed: {context}")]
    LpFailure { context: String },

    /// The policy-evaluation linear system came back with a residual above
    /// the contract bound. Should be impossible for discount < 1.
    #[error("policy evaluation solve failed, residual {residual:e}")]
    LinearSolveFailure { residual: f64 },

    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("successor annotation references node {index} but controller has {len} nodes")]
    InvalidSuccessor { index: usize, len: usize },

    /// Cross-sum operands both carried an assignment for the same observation.
    #[error("cross-sum annotation overlap on observation {observation}")]
    CrossSumOverlap { observation: usize },

    #[error("node {node} is not a fringe node and cannot be expanded")]
    NotFringe { node: usize },

    #[error("improvement extraction requires an improved root lower bound")]
    NoImprovedRoot,

    #[error("search exhausted: no fringe node in the best partial solution")]
    SearchExhausted,
}

pub type Result<T> = std::result::Result<T, SolverError>;
