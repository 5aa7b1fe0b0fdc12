//! Exact solving of infinite-horizon discounted POMDPs with policies
//! represented as finite-state controllers.
//!
//! Two solvers share the same machinery: policy iteration improves a
//! controller with full dynamic-programming updates over piecewise-linear
//! convex value functions, and heuristic search improves it by best-first
//! AND/OR expansion from a start belief, bounded below by the controller's
//! value function and above by the underlying fully observable MDP.

pub mod bounds;
pub mod controller;
pub mod error;
pub mod lp;
pub mod model;
pub mod policy_iteration;
pub mod probe;
pub mod search;
pub mod value;

pub use controller::{
    apply_improvement, evaluate_controller, prune_unreachable, start_node, step_controller,
    ControllerNode, FiniteStateController,
};
pub use bounds::{mdp_upper_bound, MdpBound};
pub use error::{Result, SolverError};
pub use policy_iteration::{
    initial_controller, policy_iterate, IterationRecord, IterationStats, PolicyIterationResult,
    SolveStatus, SolverConfig,
};
pub use model::{
    belief_update, expected_reward, observation_probability, Belief, ModelError, PomdpModel,
};
pub use search::{
    backup_bounds, expand_node, extract_improvements, heuristic_search_solve, select_fringe_node,
    AndNode, HeuristicSearchResult, OrNode, SearchTree,
};
pub use value::{
    backproject, bellman_residual, cross_sum, dp_update, evaluate_at, lp_dominance_witness,
    pointwise_dominates, prune_to_minimal, Tolerances, ValueVector, VectorSet,
};
