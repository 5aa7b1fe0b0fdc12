//! Policy iteration: evaluate the controller, run the exact
//! dynamic-programming update, fold the result back into the controller,
//! and stop once the Bellman residual certifies epsilon-optimality.

use std::time::{Duration, Instant};

use crate::controller::{
    apply_improvement, evaluate_controller, prune_unreachable, FiniteStateController,
};
use crate::error::Result;
use crate::model::{Belief, PomdpModel};
use crate::probe::probe_beliefs;
use crate::value::{bellman_residual, dp_update, evaluate_at, Tolerances, VectorSet};

/// Number of fixed probe beliefs sampled for per-iteration statistics.
pub const PROBE_COUNT: usize = 200;

/// Shared solver knobs.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Target optimality gap; the stopping threshold on the Bellman
    /// residual is `epsilon * (1 - beta) / beta`.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Cap on controller machine states.
    pub max_nodes: usize,
    pub tolerances: Tolerances,
    /// Label seeding the probe-belief sequence, usually the problem name.
    pub probe_label: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            max_iterations: 1000,
            max_nodes: 20_000,
            tolerances: Tolerances::default(),
            probe_label: String::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.max_iterations == 0 || self.max_nodes == 0 {
            return Err("iteration and node limits must be positive".into());
        }
        Ok(())
    }

    /// `epsilon * (1 - beta) / beta`, the residual threshold certifying an
    /// epsilon-optimal controller.
    pub fn residual_threshold(&self, discount: f64) -> f64 {
        self.epsilon * (1.0 - discount) / discount
    }
}

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    EpsilonOptimal,
    IterationLimit,
    NodeLimit,
    MemoryLimit,
}

/// One outer iteration of policy iteration.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Machine states before this iteration's transformation.
    pub controller_nodes: usize,
    /// Size of the dynamic-programming update output.
    pub update_vectors: usize,
    pub residual: f64,
    /// Value of the current controller at the uniform belief.
    pub probe_value: f64,
    /// Values at the full probe set, for monotonicity checks.
    pub probe_values: Vec<f64>,
    pub elapsed: Duration,
}

/// Per-iteration records for one solve.
#[derive(Debug, Clone, Default)]
pub struct IterationStats {
    pub records: Vec<IterationRecord>,
}

/// Everything policy iteration returns.
#[derive(Debug)]
pub struct PolicyIterationResult {
    pub controller: FiniteStateController,
    pub value: VectorSet,
    pub stats: IterationStats,
    pub status: SolveStatus,
}

/// Single-node controller taking the maximin-reward action with self-loops
/// on every observation.
pub fn initial_controller(model: &PomdpModel) -> FiniteStateController {
    let mut best_action = 0;
    let mut best_worst = f64::NEG_INFINITY;
    for a in 0..model.n_actions() {
        let worst = (0..model.n_states())
            .map(|s| model.reward(s, a))
            .fold(f64::INFINITY, f64::min);
        if worst > best_worst {
            best_worst = worst;
            best_action = a;
        }
    }
    FiniteStateController::new(
        vec![crate::controller::ControllerNode {
            action: best_action,
            successors: vec![0; model.n_observations()],
            tag: "init".to_string(),
        }],
        model.n_observations(),
    )
    .expect("single self-loop node is valid")
}

/// Runs policy iteration from `fsc0` until the Bellman residual drops to
/// `epsilon (1-beta)/beta` or a limit is hit.
pub fn policy_iterate(
    model: &PomdpModel,
    fsc0: &FiniteStateController,
    cfg: &SolverConfig,
) -> Result<PolicyIterationResult> {
    let threshold = cfg.residual_threshold(model.discount());
    let probes: Vec<Belief> = probe_beliefs(model.n_states(), PROBE_COUNT, &cfg.probe_label)
        .into_iter()
        .map(|p| Belief::new(p).expect("probe is a distribution"))
        .collect();
    let uniform = Belief::uniform(model.n_states());

    let mut fsc = fsc0.clone();
    let mut value = evaluate_controller(model, &fsc)?;
    let mut stats = IterationStats::default();
    let start = Instant::now();

    for iteration in 1..=cfg.max_iterations {
        let update = dp_update(model, &value, &cfg.tolerances)?;
        let residual = bellman_residual(&value, &update)?;
        stats.records.push(IterationRecord {
            iteration,
            controller_nodes: fsc.len(),
            update_vectors: update.len(),
            residual,
            probe_value: evaluate_at(&value, &uniform).0,
            probe_values: probes.iter().map(|b| evaluate_at(&value, b).0).collect(),
            elapsed: start.elapsed(),
        });

        if residual <= threshold {
            return Ok(PolicyIterationResult {
                controller: fsc,
                value,
                stats,
                status: SolveStatus::EpsilonOptimal,
            });
        }

        let tag = format!("pi:{iteration}");
        let outcome = apply_improvement(&fsc, &value, &update, &tag, &cfg.tolerances)?;
        let compacted = outcome.controller.len() < fsc.len() + usize::from(outcome.added);

        // Prune machine states that no update vector corresponds to, unless
        // still reachable from one that does.
        let roots: Vec<usize> = {
            let mut roots = outcome.vector_nodes.clone();
            roots.sort_unstable();
            roots.dedup();
            roots
        };
        let (pruned, mapping) = prune_unreachable(&outcome.controller, &roots);
        let pruned_any = pruned.len() < outcome.controller.len();

        if pruned.len() > cfg.max_nodes {
            return Ok(PolicyIterationResult {
                controller: pruned,
                value,
                stats,
                status: SolveStatus::NodeLimit,
            });
        }

        if outcome.changed || compacted || pruned_any {
            fsc = pruned;
            value = evaluate_controller(model, &fsc)?;
        } else {
            // Pure additions: the enlarged controller's evaluation is the
            // old vectors for old nodes plus the update vectors for the
            // appended ones, so re-solving the linear system is redundant.
            let node_values = outcome.node_values;
            debug_assert!(mapping.iter().all(|m| m.is_some()));
            fsc = pruned;
            let vectors = fsc
                .nodes()
                .iter()
                .zip(node_values)
                .map(|(node, values)| crate::value::ValueVector {
                    values,
                    action: node.action,
                    successors: node.successors.clone(),
                })
                .collect();
            value = VectorSet::new(vectors, value.generation() + 1);
        }
    }

    Ok(PolicyIterationResult {
        controller: fsc,
        value,
        stats,
        status: SolveStatus::IterationLimit,
    })
}
