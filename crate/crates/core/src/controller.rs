//! Finite-state controllers: the policy representation.
//!
//! A controller is a set of machine states, each labeled with an action and
//! one successor per observation. Its value function is piecewise linear,
//! one |S|-vector per machine state, obtained by solving the linear system
//!
//! `v^i(s) = r(s,a(i)) + beta * sum_{s',z} Pr(s'|s,a(i)) Pr(z|s',a(i)) v^{l(i,z)}(s')`.
//!
//! Policy improvement compares freshly backed-up vectors against machine
//! states and either keeps a state (structural duplicate), rewrites it in
//! place (pointwise dominance), or appends a new one. Both solvers drive
//! their transformations through [`ImprovementState`].

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SolverError};
use crate::model::{Belief, PomdpModel};
use crate::value::{evaluate_at, pointwise_dominates, Tolerances, ValueVector, VectorSet};

/// Sup-norm bound the evaluation solve must meet.
pub const EVALUATION_RESIDUAL_BOUND: f64 = 1e-9;

/// One machine state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControllerNode {
    pub action: usize,
    /// Successor machine state per observation.
    pub successors: Vec<usize>,
    /// Free-form provenance tag; no semantic weight.
    pub tag: String,
}

/// A nonempty machine with one successor edge per (node, observation).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteStateController {
    nodes: Vec<ControllerNode>,
    n_observations: usize,
}

impl FiniteStateController {
    pub fn new(nodes: Vec<ControllerNode>, n_observations: usize) -> Result<Self> {
        assert!(!nodes.is_empty(), "a controller must have at least one node");
        for node in &nodes {
            if node.successors.len() != n_observations {
                return Err(SolverError::DimensionMismatch {
                    what: "controller node successors",
                    expected: n_observations,
                    got: node.successors.len(),
                });
            }
            for &succ in &node.successors {
                if succ >= nodes.len() {
                    return Err(SolverError::InvalidSuccessor {
                        index: succ,
                        len: nodes.len(),
                    });
                }
            }
        }
        Ok(Self {
            nodes,
            n_observations,
        })
    }

    pub fn nodes(&self) -> &[ControllerNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_observations(&self) -> usize {
        self.n_observations
    }
}

/// The action at `node` and the successor after observing `z`.
pub fn step_controller(
    fsc: &FiniteStateController,
    node: usize,
    z: usize,
) -> (usize, usize) {
    let n = &fsc.nodes[node];
    (n.action, n.successors[z])
}

/// Machine state to start in: the one whose vector maximizes the value of
/// the start belief (lowest index on ties).
pub fn start_node(fsc: &FiniteStateController, value: &VectorSet, b0: &Belief) -> usize {
    debug_assert_eq!(value.len(), fsc.len());
    evaluate_at(value, b0).1
}

/// Solves the policy-evaluation linear system and returns one annotated
/// vector per machine state.
pub fn evaluate_controller(
    model: &PomdpModel,
    fsc: &FiniteStateController,
) -> Result<VectorSet> {
    if fsc.n_observations() != model.n_observations() {
        return Err(SolverError::DimensionMismatch {
            what: "controller observation count",
            expected: model.n_observations(),
            got: fsc.n_observations(),
        });
    }
    let ns = model.n_states();
    let nz = model.n_observations();
    let n = fsc.len() * ns;
    let beta = model.discount();

    // x = r + beta * K x, one row per (machine state, system state).
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (i, node) in fsc.nodes.iter().enumerate() {
        for s in 0..ns {
            let row = i * ns + s;
            rhs[row] = model.reward(s, node.action);
            for s_next in 0..ns {
                let p_transition = model.transition(s, node.action, s_next);
                if p_transition == 0.0 {
                    continue;
                }
                for z in 0..nz {
                    let p = p_transition * model.observation(node.action, s_next, z);
                    if p == 0.0 {
                        continue;
                    }
                    let col = node.successors[z] * ns + s_next;
                    system[(row, col)] -= beta * p;
                }
            }
        }
    }

    let lu = system.clone().lu();
    let mut solution = lu
        .solve(&rhs)
        .ok_or(SolverError::LinearSolveFailure { residual: f64::INFINITY })?;
    // One step of iterative refinement keeps the residual near machine eps
    // even for discounts close to 1.
    let correction = lu.solve(&(&rhs - &system * &solution));
    if let Some(correction) = correction {
        solution += correction;
    }
    let residual = (&system * &solution - &rhs).amax();
    if !(residual <= EVALUATION_RESIDUAL_BOUND) {
        return Err(SolverError::LinearSolveFailure { residual });
    }

    let vectors = fsc
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| ValueVector {
            values: (0..ns).map(|s| solution[i * ns + s]).collect(),
            action: node.action,
            successors: node.successors.clone(),
        })
        .collect();
    Ok(VectorSet::new(vectors, 0))
}

/// Result of folding a batch of improvement vectors into a controller.
#[derive(Debug)]
pub struct ImprovementOutcome {
    pub controller: FiniteStateController,
    /// Any machine state was rewritten or merged away.
    pub changed: bool,
    /// Any machine state was appended.
    pub added: bool,
    /// Final node index each input vector corresponds to.
    pub vector_nodes: Vec<usize>,
    /// Working value vector per final node (inputs for rewritten and added
    /// nodes, the old evaluation for untouched ones).
    pub node_values: Vec<Vec<f64>>,
}

/// Mutable working form of a controller during one improvement pass.
///
/// Merged-away nodes become tombstones so indices stay stable while the
/// pass runs; `finish` compacts them out.
pub struct ImprovementState {
    nodes: Vec<Option<ControllerNode>>,
    values: Vec<Vec<f64>>,
    redirect: Vec<usize>,
    n_observations: usize,
    pub changed: bool,
    pub added: bool,
}

impl ImprovementState {
    pub fn new(fsc: &FiniteStateController, evaluation: &VectorSet) -> Result<Self> {
        if evaluation.len() != fsc.len() {
            return Err(SolverError::DimensionMismatch {
                what: "controller evaluation",
                expected: fsc.len(),
                got: evaluation.len(),
            });
        }
        Ok(Self {
            nodes: fsc.nodes.iter().cloned().map(Some).collect(),
            values: evaluation
                .vectors()
                .iter()
                .map(|v| v.values.clone())
                .collect(),
            redirect: (0..fsc.len()).collect(),
            n_observations: fsc.n_observations(),
            changed: false,
            added: false,
        })
    }

    /// Follows merge redirections to a live node.
    pub fn resolve(&self, index: usize) -> usize {
        let mut index = index;
        while self.redirect[index] != index {
            index = self.redirect[index];
        }
        index
    }

    /// Current value vector of a (live) node.
    pub fn value_of(&self, index: usize) -> &[f64] {
        &self.values[self.resolve(index)]
    }

    /// Applies the keep/change/add rules for one backed-up vector and
    /// returns the node it ends up corresponding to.
    pub fn apply_vector(
        &mut self,
        values: &[f64],
        action: usize,
        successors: &[usize],
        tag: &str,
        tol: &Tolerances,
    ) -> Result<usize> {
        let successors: Vec<usize> = successors
            .iter()
            .map(|&s| {
                if s >= self.redirect.len() {
                    Err(SolverError::InvalidSuccessor {
                        index: s,
                        len: self.redirect.len(),
                    })
                } else {
                    Ok(self.resolve(s))
                }
            })
            .collect::<Result<_>>()?;

        // Keep: the choice already exists as a machine state.
        for (k, node) in self.nodes.iter().enumerate() {
            if let Some(node) = node {
                if node.action == action && node.successors == successors {
                    return Ok(k);
                }
            }
        }

        // Change: rewrite every pointwise-dominated machine state; if there
        // are several they merge into the lowest-indexed one.
        let dominated: Vec<usize> = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(k, node)| {
                node.is_some() && pointwise_dominates(values, &self.values[*k], tol.equality)
            })
            .map(|(k, _)| k)
            .collect();
        if let Some(&survivor) = dominated.first() {
            self.nodes[survivor] = Some(ControllerNode {
                action,
                successors,
                tag: tag.to_string(),
            });
            self.values[survivor] = values.to_vec();
            for &gone in &dominated[1..] {
                self.nodes[gone] = None;
                self.redirect[gone] = survivor;
            }
            if dominated.len() > 1 {
                // Every link into a merged-away node now enters the survivor.
                for node in self.nodes.iter_mut().flatten() {
                    for succ in &mut node.successors {
                        let mut s = *succ;
                        while self.redirect[s] != s {
                            s = self.redirect[s];
                        }
                        *succ = s;
                    }
                }
            }
            self.changed = true;
            return Ok(survivor);
        }

        // Add.
        let index = self.nodes.len();
        self.nodes.push(Some(ControllerNode {
            action,
            successors,
            tag: tag.to_string(),
        }));
        self.values.push(values.to_vec());
        self.redirect.push(index);
        self.added = true;
        Ok(index)
    }

    /// Compacts tombstones out and remaps the given correspondence indices.
    pub fn finish(self, vector_nodes: Vec<usize>) -> ImprovementOutcome {
        let mut remap = vec![usize::MAX; self.nodes.len()];
        let mut nodes = Vec::new();
        let mut node_values = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.is_some() {
                remap[i] = nodes.len();
                nodes.push(node.clone().unwrap());
                node_values.push(self.values[i].clone());
            }
        }
        let resolve = |mut i: usize| {
            while self.redirect[i] != i {
                i = self.redirect[i];
            }
            remap[i]
        };
        for node in &mut nodes {
            for succ in &mut node.successors {
                *succ = resolve(*succ);
            }
        }
        let vector_nodes = vector_nodes.into_iter().map(resolve).collect();
        ImprovementOutcome {
            controller: FiniteStateController::new(nodes, self.n_observations)
                .expect("compaction preserves link validity"),
            changed: self.changed,
            added: self.added,
            vector_nodes,
            node_values,
        }
    }
}

/// Folds a dynamic-programming update result into the controller: for each
/// vector, keep a structurally identical machine state, rewrite a pointwise
/// dominated one, or append a new state.
pub fn apply_improvement(
    fsc: &FiniteStateController,
    evaluation: &VectorSet,
    update: &VectorSet,
    tag: &str,
    tol: &Tolerances,
) -> Result<ImprovementOutcome> {
    let mut state = ImprovementState::new(fsc, evaluation)?;
    let mut vector_nodes = Vec::with_capacity(update.len());
    for vector in update.vectors() {
        vector_nodes.push(state.apply_vector(
            &vector.values,
            vector.action,
            &vector.successors,
            tag,
            tol,
        )?);
    }
    Ok(state.finish(vector_nodes))
}

/// Drops every machine state not reachable from `roots` via successor
/// links, compacting indices. Returns the pruned controller and the old to
/// new index mapping.
pub fn prune_unreachable(
    fsc: &FiniteStateController,
    roots: &[usize],
) -> (FiniteStateController, Vec<Option<usize>>) {
    assert!(!roots.is_empty(), "pruning needs at least one root");
    let mut reachable = vec![false; fsc.len()];
    let mut queue: Vec<usize> = Vec::new();
    for &root in roots {
        if !reachable[root] {
            reachable[root] = true;
            queue.push(root);
        }
    }
    while let Some(i) = queue.pop() {
        for &succ in &fsc.nodes[i].successors {
            if !reachable[succ] {
                reachable[succ] = true;
                queue.push(succ);
            }
        }
    }

    let mut mapping = vec![None; fsc.len()];
    let mut nodes = Vec::new();
    for (i, node) in fsc.nodes.iter().enumerate() {
        if reachable[i] {
            mapping[i] = Some(nodes.len());
            nodes.push(node.clone());
        }
    }
    for node in &mut nodes {
        for succ in &mut node.successors {
            *succ = mapping[*succ].expect("successor of a reachable node is reachable");
        }
    }
    let pruned = FiniteStateController::new(nodes, fsc.n_observations())
        .expect("pruning preserves link validity");
    (pruned, mapping)
}
