//! Piecewise-linear-convex value functions over the belief simplex.
//!
//! A value function is a finite set of |S|-vectors under a max: the value of
//! a belief is the best dot product over the set. Each vector carries the
//! one-step policy choice it came from: an action and, per observation, the
//! index of the successor vector. The exact dynamic-programming backup is
//! computed by incremental pruning: back-project each input vector per
//! (action, observation), prune after every pairwise cross-sum within an
//! action, add the reward once per action, and prune the union over actions.

use crate::error::{Result, SolverError};
use crate::lp::{maximize_min_dot, min_dot};
use crate::model::{belief_update, expected_reward, observation_probability, Belief, PomdpModel};

/// Numeric thresholds separating genuine facets from solver noise.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    /// Minimum LP advantage for a vector to count as undominated.
    pub dominance: f64,
    /// Componentwise distance under which two vectors are the same facet.
    pub equality: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            dominance: 1e-7,
            equality: 1e-9,
        }
    }
}

/// One linear facet with its one-step policy annotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueVector {
    /// v(s) per state.
    pub values: Vec<f64>,
    /// The action this facet commits to.
    pub action: usize,
    /// Successor vector (or machine state) index per observation.
    pub successors: Vec<usize>,
}

/// A PWLC value function: nonempty set of annotated vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    vectors: Vec<ValueVector>,
    generation: u64,
}

impl VectorSet {
    pub fn new(vectors: Vec<ValueVector>, generation: u64) -> Self {
        assert!(!vectors.is_empty(), "a vector set must be nonempty");
        Self {
            vectors,
            generation,
        }
    }

    pub fn vectors(&self) -> &[ValueVector] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn dimension(&self) -> usize {
        self.vectors[0].values.len()
    }
}

/// `V(b) = max_i b . v^i` with the attaining index, lowest index on ties.
pub fn evaluate_at(set: &VectorSet, b: &Belief) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut best_index = 0;
    for (i, v) in set.vectors.iter().enumerate() {
        let dot: f64 = v.values.iter().zip(b.probs()).map(|(x, y)| x * y).sum();
        if dot > best {
            best = dot;
            best_index = i;
        }
    }
    (best, best_index)
}

/// True iff `v >= w` everywhere and `v > w + equality_tol` somewhere.
/// Equal vectors are duplicates, not dominance.
pub fn pointwise_dominates(v: &[f64], w: &[f64], equality_tol: f64) -> bool {
    debug_assert_eq!(v.len(), w.len());
    let mut strict = false;
    for (&a, &b) in v.iter().zip(w) {
        if a < b {
            return false;
        }
        if a > b + equality_tol {
            strict = true;
        }
    }
    strict
}

/// Searches for a belief where `w` beats every vector in `others` by more
/// than the dominance tolerance. `None` means `w` is dominated.
///
/// The LP maximizes the worst advantage d = min_u b.(w - u); the witness is
/// accepted only if the advantage recomputed at the witness clears half the
/// tolerance, guarding against solver slack.
pub fn lp_dominance_witness(
    w: &[f64],
    others: &[&[f64]],
    tol: &Tolerances,
) -> Result<Option<Belief>> {
    assert!(!others.is_empty(), "dominance test needs a nonempty set");
    let diffs: Vec<Vec<f64>> = others
        .iter()
        .map(|u| w.iter().zip(u.iter()).map(|(a, b)| a - b).collect())
        .collect();
    let rows: Vec<&[f64]> = diffs.iter().map(|d| d.as_slice()).collect();
    let solution = maximize_min_dot(&rows).map_err(|e| attach_vectors(e, w, others))?;
    if solution.value <= tol.dominance {
        return Ok(None);
    }
    if min_dot(&rows, &solution.witness) <= tol.dominance / 2.0 {
        return Ok(None);
    }
    Ok(Some(Belief::new(solution.witness).expect("LP witness is a distribution")))
}

fn attach_vectors(err: SolverError, w: &[f64], others: &[&[f64]]) -> SolverError {
    match err {
        SolverError::LpFailure { context } => SolverError::LpFailure {
            context: format!("{context}; candidate {w:?} against {others:?}"),
        },
        other => other,
    }
}

/// Indices of a minimal subset representing the same upper surface.
///
/// Duplicates (componentwise within the equality tolerance) collapse to the
/// lowest index, pointwise-dominated vectors drop, and every remaining
/// vector must produce an LP witness against all the others still retained.
/// Sequential and order-stable, so the result is canonical for a given input
/// order.
fn minimal_indices(values: &[&[f64]], tol: &Tolerances) -> Result<Vec<usize>> {
    let n = values.len();
    let mut keep = vec![true; n];

    for i in 0..n {
        if !keep[i] {
            continue;
        }
        for j in (i + 1)..n {
            if keep[j]
                && values[i]
                    .iter()
                    .zip(values[j])
                    .all(|(a, b)| (a - b).abs() <= tol.equality)
            {
                keep[j] = false;
            }
        }
    }

    for i in 0..n {
        if !keep[i] {
            continue;
        }
        for j in 0..n {
            if i != j && keep[j] && pointwise_dominates(values[i], values[j], tol.equality) {
                keep[j] = false;
            }
        }
    }

    for i in 0..n {
        if !keep[i] {
            continue;
        }
        let others: Vec<&[f64]> = (0..n)
            .filter(|&j| j != i && keep[j])
            .map(|j| values[j])
            .collect();
        if others.is_empty() {
            break;
        }
        if lp_dominance_witness(values[i], &others, tol)?.is_none() {
            keep[i] = false;
        }
    }

    Ok((0..n).filter(|&i| keep[i]).collect())
}

/// Minimal representation of the same value function.
pub fn prune_to_minimal(set: &VectorSet, tol: &Tolerances) -> Result<VectorSet> {
    let values: Vec<&[f64]> = set.vectors.iter().map(|v| v.values.as_slice()).collect();
    let kept = minimal_indices(&values, tol)?;
    Ok(VectorSet::new(
        kept.into_iter().map(|i| set.vectors[i].clone()).collect(),
        set.generation,
    ))
}

/// Back-projection `g^{a,z}(s) = sum_{s'} Pr(z|s',a) Pr(s'|s,a) v(s')`.
/// Discount and reward are applied by the caller.
pub fn backproject(model: &PomdpModel, a: usize, z: usize, v: &[f64]) -> Vec<f64> {
    let ns = model.n_states();
    debug_assert_eq!(v.len(), ns);
    let weighted: Vec<f64> = (0..ns)
        .map(|s_next| model.observation(a, s_next, z) * v[s_next])
        .collect();
    (0..ns)
        .map(|s| {
            model
                .transition_row(s, a)
                .iter()
                .zip(&weighted)
                .map(|(p, w)| p * w)
                .sum()
        })
        .collect()
}

/// A vector mid cross-sum: its observation-to-successor map is still partial.
#[derive(Debug, Clone)]
pub struct PartialVector {
    pub values: Vec<f64>,
    pub action: usize,
    pub successors: Vec<Option<usize>>,
}

/// Pairwise sums with annotation maps merged; the operands must assign
/// disjoint observation sets.
pub fn cross_sum(a: &[PartialVector], b: &[PartialVector]) -> Result<Vec<PartialVector>> {
    assert!(!a.is_empty() && !b.is_empty(), "cross-sum operands must be nonempty");
    let mut out = Vec::with_capacity(a.len() * b.len());
    for x in a {
        for y in b {
            debug_assert_eq!(x.action, y.action);
            let values = x.values.iter().zip(&y.values).map(|(u, v)| u + v).collect();
            let mut successors = x.successors.clone();
            for (z, s) in y.successors.iter().enumerate() {
                if let Some(s) = s {
                    if successors[z].is_some() {
                        return Err(SolverError::CrossSumOverlap { observation: z });
                    }
                    successors[z] = Some(*s);
                }
            }
            out.push(PartialVector {
                values,
                action: x.action,
                successors,
            });
        }
    }
    Ok(out)
}

fn prune_partial(set: Vec<PartialVector>, tol: &Tolerances) -> Result<Vec<PartialVector>> {
    let values: Vec<&[f64]> = set.iter().map(|v| v.values.as_slice()).collect();
    let kept = minimal_indices(&values, tol)?;
    let mut set = set;
    let mut index = 0;
    set.retain(|_| {
        let keep = kept.contains(&index);
        index += 1;
        keep
    });
    Ok(set)
}

/// The exact dynamic-programming update: the minimal vector set V' with
/// `V'(b) = max_a [rho(b,a) + beta * sum_z Pr(z|b,a) V(b_z^a)]` for every
/// belief, each output vector annotated with its action and per-observation
/// successor index into the input set. Output order is canonical
/// (lexicographic on action, successors, values).
pub fn dp_update(model: &PomdpModel, set: &VectorSet, tol: &Tolerances) -> Result<VectorSet> {
    let nz = model.n_observations();
    let beta = model.discount();
    let mut candidates: Vec<ValueVector> = Vec::new();

    for a in 0..model.n_actions() {
        // One set per observation: discounted back-projections of every
        // input vector, annotated with the choice {z -> input index}.
        let mut combined: Option<Vec<PartialVector>> = None;
        for z in 0..nz {
            let projected: Vec<PartialVector> = set
                .vectors()
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut successors = vec![None; nz];
                    successors[z] = Some(i);
                    PartialVector {
                        values: backproject(model, a, z, &v.values)
                            .into_iter()
                            .map(|g| beta * g)
                            .collect(),
                        action: a,
                        successors,
                    }
                })
                .collect();
            let projected = prune_partial(projected, tol)?;
            combined = Some(match combined {
                None => projected,
                Some(acc) => prune_partial(cross_sum(&acc, &projected)?, tol)?,
            });
        }

        let reward = model.reward_vector(a);
        for partial in combined.expect("at least one observation") {
            let values = partial
                .values
                .iter()
                .zip(&reward)
                .map(|(v, r)| v + r)
                .collect();
            let successors = partial
                .successors
                .into_iter()
                .map(|s| s.expect("all observations assigned"))
                .collect();
            candidates.push(ValueVector {
                values,
                action: a,
                successors,
            });
        }
    }

    candidates.sort_by(|x, y| {
        x.action
            .cmp(&y.action)
            .then_with(|| x.successors.cmp(&y.successors))
            .then_with(|| {
                x.values
                    .partial_cmp(&y.values)
                    .expect("vector values are ordered")
            })
    });

    let values: Vec<&[f64]> = candidates.iter().map(|v| v.values.as_slice()).collect();
    let kept = minimal_indices(&values, tol)?;
    Ok(VectorSet::new(
        kept.into_iter().map(|i| candidates[i].clone()).collect(),
        set.generation() + 1,
    ))
}

/// Sup-norm distance between two PWLC functions over the belief simplex,
/// computed exactly: for each facet of one set, LP-maximize its worst
/// advantage over the other set, in both orderings.
pub fn bellman_residual(a: &VectorSet, b: &VectorSet) -> Result<f64> {
    let mut worst = f64::NEG_INFINITY;
    for (from, to) in [(a, b), (b, a)] {
        for x in from.vectors() {
            let diffs: Vec<Vec<f64>> = to
                .vectors()
                .iter()
                .map(|y| {
                    x.values
                        .iter()
                        .zip(&y.values)
                        .map(|(u, v)| u - v)
                        .collect()
                })
                .collect();
            let rows: Vec<&[f64]> = diffs.iter().map(|d| d.as_slice()).collect();
            worst = worst.max(maximize_min_dot(&rows)?.value);
        }
    }
    debug_assert!(worst >= -1e-9, "residual cannot be negative: {worst}");
    Ok(worst.max(0.0))
}

/// Brute-force one-step backup of `set` at a single belief, used by the
/// search module and as the reference the DP update must agree with.
pub fn backup_value_at(model: &PomdpModel, set: &VectorSet, b: &Belief) -> Result<f64> {
    let mut best = f64::NEG_INFINITY;
    for a in 0..model.n_actions() {
        let mut total = expected_reward(model, b, a);
        let obs_probs = observation_probability(model, b, a)?;
        for (z, &p) in obs_probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let next = belief_update(model, b, a, z)?;
            total += model.discount() * p * evaluate_at(set, &next).0;
        }
        best = best.max(total);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{proptest, prop_assert, prop_assert_eq, ProptestConfig};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn plain(values: Vec<f64>) -> ValueVector {
        ValueVector {
            values,
            action: 0,
            successors: vec![0],
        }
    }

    fn set_of(vectors: Vec<Vec<f64>>) -> VectorSet {
        VectorSet::new(vectors.into_iter().map(plain).collect(), 0)
    }

    fn random_model(rng: &mut impl Rng, ns: usize, na: usize, nz: usize) -> PomdpModel {
        let row = |rng: &mut dyn RngCore, n: usize| {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() + 1e-3).collect();
            let sum: f64 = v.iter().sum();
            v.iter_mut().for_each(|p| *p /= sum);
            v
        };
        let mut transition = Vec::new();
        let mut observation_fn = Vec::new();
        for _ in 0..na {
            for _ in 0..ns {
                transition.extend(row(rng, ns));
            }
            for _ in 0..ns {
                observation_fn.extend(row(rng, nz));
            }
        }
        let reward = (0..ns * na).map(|_| rng.gen_range(-1.0..1.0)).collect();
        PomdpModel::from_tables(ns, na, nz, transition, observation_fn, reward, 0.9).unwrap()
    }

    fn random_belief(rng: &mut impl Rng, n: usize) -> Belief {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let sum: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= sum);
        Belief::new(v).unwrap()
    }

    fn random_set(rng: &mut impl Rng, ns: usize, nz: usize, count: usize) -> VectorSet {
        let vectors = (0..count)
            .map(|_| ValueVector {
                values: (0..ns).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                action: 0,
                successors: vec![0; nz],
            })
            .collect();
        VectorSet::new(vectors, 0)
    }

    /// Enumerates every observation strategy per action: the independent
    /// oracle for the one-step backup.
    fn backup_oracle(model: &PomdpModel, set: &VectorSet, b: &Belief) -> f64 {
        let nz = model.n_observations();
        let nv = set.len();
        let mut best = f64::NEG_INFINITY;
        for a in 0..model.n_actions() {
            let rho = expected_reward(model, b, a);
            let obs_probs = observation_probability(model, b, a).unwrap();
            let mut assignment = vec![0usize; nz];
            loop {
                let mut total = rho;
                for z in 0..nz {
                    if obs_probs[z] <= 0.0 {
                        continue;
                    }
                    let next = belief_update(model, b, a, z).unwrap();
                    let dot: f64 = set.vectors()[assignment[z]]
                        .values
                        .iter()
                        .zip(next.probs())
                        .map(|(x, y)| x * y)
                        .sum();
                    total += model.discount() * obs_probs[z] * dot;
                }
                best = best.max(total);
                // Advance the strategy odometer.
                let mut z = 0;
                loop {
                    if z == nz {
                        break;
                    }
                    assignment[z] += 1;
                    if assignment[z] < nv {
                        break;
                    }
                    assignment[z] = 0;
                    z += 1;
                }
                if z == nz {
                    break;
                }
            }
        }
        best
    }

    #[test]
    fn evaluate_single_zero_facet() {
        let set = set_of(vec![vec![0.0, 0.0]]);
        let b = Belief::new(vec![0.3, 0.7]).unwrap();
        assert_eq!(evaluate_at(&set, &b), (0.0, 0));
    }

    #[test]
    fn evaluate_breaks_ties_by_lowest_index() {
        let set = set_of(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let b = Belief::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(evaluate_at(&set, &b), (0.5, 0));
    }

    #[test]
    fn evaluate_matches_exhaustive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let set = random_set(&mut rng, 3, 1, 5);
        for _ in 0..100 {
            let b = random_belief(&mut rng, 3);
            let (value, index) = evaluate_at(&set, &b);
            let dots: Vec<f64> = set
                .vectors()
                .iter()
                .map(|v| v.values.iter().zip(b.probs()).map(|(x, y)| x * y).sum())
                .collect();
            let oracle = dots.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!((value - oracle).abs() < 1e-12);
            assert_eq!(dots[index], oracle);
        }
    }

    #[test]
    fn pointwise_dominance_cases() {
        let tol = Tolerances::default();
        assert!(pointwise_dominates(&[1.0, 1.0], &[0.0, 0.0], tol.equality));
        assert!(!pointwise_dominates(&[1.0, 0.0], &[0.0, 1.0], tol.equality));
        assert!(!pointwise_dominates(&[0.5, 0.5], &[0.5, 0.5], tol.equality));
    }

    /// Grid oracle over the 1-simplex with step 1e-3: does any belief give
    /// the candidate an advantage over the whole set?
    fn grid_has_witness(w: &[f64], others: &[Vec<f64>]) -> bool {
        for i in 0..=1000 {
            let b = [i as f64 / 1000.0, 1.0 - i as f64 / 1000.0];
            let advantage = others
                .iter()
                .map(|u| (w[0] - u[0]) * b[0] + (w[1] - u[1]) * b[1])
                .fold(f64::INFINITY, f64::min);
            if advantage > 1e-7 {
                return true;
            }
        }
        false
    }

    #[test]
    fn dominance_witness_trivial_gap() {
        let tol = Tolerances::default();
        let witness = lp_dominance_witness(&[1.0, 1.0], &[&[0.0, 0.0]], &tol).unwrap();
        assert!(witness.is_some());
    }

    #[test]
    fn dominated_midpoint_has_no_witness() {
        let tol = Tolerances::default();
        let others = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(!grid_has_witness(&[0.4, 0.4], &others));
        let refs: Vec<&[f64]> = others.iter().map(|v| v.as_slice()).collect();
        assert!(lp_dominance_witness(&[0.4, 0.4], &refs, &tol).unwrap().is_none());
    }

    #[test]
    fn raised_midpoint_has_a_witness_near_center() {
        let tol = Tolerances::default();
        let others = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(grid_has_witness(&[0.6, 0.6], &others));
        let refs: Vec<&[f64]> = others.iter().map(|v| v.as_slice()).collect();
        let witness = lp_dominance_witness(&[0.6, 0.6], &refs, &tol)
            .unwrap()
            .expect("0.6 beats max(b0,b1) at the center");
        assert!((witness.get(0) - 0.5).abs() < 0.101);
    }

    #[test]
    fn prune_drops_pointwise_dominated() {
        let tol = Tolerances::default();
        let pruned = prune_to_minimal(&set_of(vec![vec![1.0, 1.0], vec![0.0, 0.0]]), &tol).unwrap();
        assert_eq!(pruned.len(), 1);
        assert_eq!(pruned.vectors()[0].values, vec![1.0, 1.0]);
    }

    #[test]
    fn prune_drops_the_never_maximal_middle_facet() {
        let tol = Tolerances::default();
        let set = set_of(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.4, 0.4]]);
        assert!(!grid_has_witness(&[0.4, 0.4], &[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let pruned = prune_to_minimal(&set, &tol).unwrap();
        assert_eq!(pruned.len(), 2);
        assert_eq!(pruned.vectors()[0].values, vec![1.0, 0.0]);
        assert_eq!(pruned.vectors()[1].values, vec![0.0, 1.0]);
    }

    #[test]
    fn prune_is_idempotent_on_minimal_sets() {
        let tol = Tolerances::default();
        let set = set_of(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.6, 0.6]]);
        let once = prune_to_minimal(&set, &tol).unwrap();
        let twice = prune_to_minimal(&once, &tol).unwrap();
        assert_eq!(once.vectors(), twice.vectors());
        assert_eq!(once.len(), 3);
    }

    #[test]
    fn backproject_identity_chain() {
        let m = PomdpModel::from_tables(1, 1, 1, vec![1.0], vec![1.0], vec![0.0], 0.9).unwrap();
        assert_eq!(backproject(&m, 0, 0, &[5.0]), vec![5.0]);
    }

    #[test]
    fn backproject_annihilated_observation_is_zero() {
        // z0 never occurs: its likelihood is 0 from every successor state.
        let m = PomdpModel::from_tables(
            2,
            1,
            2,
            vec![0.5, 0.5, 0.5, 0.5],
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 0.0],
            0.9,
        )
        .unwrap();
        assert_eq!(backproject(&m, 0, 0, &[3.0, 4.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn backproject_matches_double_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = random_model(&mut rng, 3, 2, 2, );
        let v: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for a in 0..2 {
            for z in 0..2 {
                let got = backproject(&m, a, z, &v);
                for s in 0..3 {
                    let mut expect = 0.0;
                    for s_next in 0..3 {
                        expect += m.observation(a, s_next, z) * m.transition(s, a, s_next) * v[s_next];
                    }
                    assert!((got[s] - expect).abs() < 1e-12);
                }
            }
        }
    }

    fn partial(values: Vec<f64>, z: usize, nz: usize, index: usize) -> PartialVector {
        let mut successors = vec![None; nz];
        successors[z] = Some(index);
        PartialVector {
            values,
            action: 0,
            successors,
        }
    }

    #[test]
    fn cross_sum_singletons() {
        let a = vec![partial(vec![1.0, 2.0], 0, 2, 0)];
        let b = vec![partial(vec![0.5, 0.5], 1, 2, 1)];
        let out = cross_sum(&a, &b).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].values, vec![1.5, 2.5]);
        assert_eq!(out[0].successors, vec![Some(0), Some(1)]);
    }

    #[test]
    fn cross_sum_cardinality_is_the_product() {
        let a = vec![
            partial(vec![1.0], 0, 2, 0),
            partial(vec![2.0], 0, 2, 1),
        ];
        let b = vec![
            partial(vec![0.1], 1, 2, 0),
            partial(vec![0.2], 1, 2, 1),
            partial(vec![0.3], 1, 2, 2),
        ];
        assert_eq!(cross_sum(&a, &b).unwrap().len(), 6);
    }

    #[test]
    fn cross_sum_rejects_overlapping_observations() {
        let a = vec![partial(vec![1.0], 0, 2, 0)];
        let b = vec![partial(vec![2.0], 0, 2, 1)];
        assert!(matches!(
            cross_sum(&a, &b),
            Err(SolverError::CrossSumOverlap { observation: 0 })
        ));
    }

    #[test]
    fn dp_update_scalar_arithmetic() {
        // One state, two actions (rewards 0 and 1), beta = 0.5, V = {4}.
        // Candidates are 0 + 0.5*4 = 2 and 1 + 0.5*4 = 3; the second wins.
        let m = PomdpModel::from_tables(
            1,
            2,
            1,
            vec![1.0, 1.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            0.5,
        )
        .unwrap();
        let set = set_of(vec![vec![4.0]]);
        let tol = Tolerances::default();
        let updated = dp_update(&m, &set, &tol).unwrap();
        assert_eq!(updated.len(), 1);
        assert_eq!(updated.vectors()[0].values, vec![3.0]);
        assert_eq!(updated.vectors()[0].action, 1);
        assert_eq!(updated.vectors()[0].successors, vec![0]);
    }

    #[test]
    fn dp_update_single_action_single_observation_has_no_cross_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let m = random_model(&mut rng, 3, 1, 1);
        let set = random_set(&mut rng, 3, 1, 3);
        let tol = Tolerances::default();
        let updated = dp_update(&m, &set, &tol).unwrap();
        assert!(updated.len() <= set.len());
        // Every output vector is r^a + beta * g^{a,z}(v) for some input v.
        for out in updated.vectors() {
            let v = &set.vectors()[out.successors[0]];
            let g = backproject(&m, 0, 0, &v.values);
            for s in 0..3 {
                let expect = m.reward(s, 0) + m.discount() * g[s];
                assert!((out.values[s] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dp_update_matches_strategy_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let tol = Tolerances::default();
        for _ in 0..10 {
            let ns = rng.gen_range(2..5);
            let na = rng.gen_range(1..4);
            let nz = rng.gen_range(1..4);
            let m = random_model(&mut rng, ns, na, nz);
            let count = rng.gen_range(1..5);
            let set = random_set(&mut rng, ns, nz, count);
            let updated = dp_update(&m, &set, &tol).unwrap();
            for _ in 0..200 {
                let b = random_belief(&mut rng, ns);
                let got = evaluate_at(&updated, &b).0;
                let oracle = backup_oracle(&m, &set, &b);
                assert!(
                    (got - oracle).abs() < 1e-8,
                    "backup mismatch: {got} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn residual_of_identical_sets_is_zero() {
        let set = set_of(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(bellman_residual(&set, &set).unwrap(), 0.0);
    }

    #[test]
    fn residual_of_uniform_shift_is_the_shift() {
        let set = set_of(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let shifted = set_of(vec![vec![1.25, 0.25], vec![0.25, 1.25]]);
        let residual = bellman_residual(&set, &shifted).unwrap();
        assert!((residual - 0.25).abs() < 1e-10);
    }

    /// Exact sup-norm oracle for 2-state sets: a dense grid over the
    /// 1-simplex augmented with every pairwise crossing point, where the
    /// piecewise-linear difference attains its extrema.
    fn residual_oracle_2d(a: &VectorSet, b: &VectorSet) -> f64 {
        let mut points: Vec<f64> = (0..=10_000).map(|i| i as f64 / 10_000.0).collect();
        let mut all: Vec<&ValueVector> = a.vectors().iter().collect();
        all.extend(b.vectors().iter());
        for (i, x) in all.iter().enumerate() {
            for y in all.iter().skip(i + 1) {
                let dx = (x.values[0] - x.values[1]) - (y.values[0] - y.values[1]);
                if dx.abs() > 1e-12 {
                    let t = (y.values[1] - x.values[1]) / dx;
                    if (0.0..=1.0).contains(&t) {
                        points.push(t);
                    }
                }
            }
        }
        points
            .iter()
            .map(|&t| {
                let belief = Belief::new(vec![t, 1.0 - t]).unwrap();
                (evaluate_at(a, &belief).0 - evaluate_at(b, &belief).0).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn residual_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..20 {
            let len_a = rng.gen_range(1..4);
            let len_b = rng.gen_range(1..4);
            let a = random_set(&mut rng, 2, 1, len_a);
            let b = random_set(&mut rng, 2, 1, len_b);
            let residual = bellman_residual(&a, &b).unwrap();
            let oracle = residual_oracle_2d(&a, &b);
            assert!(
                (residual - oracle).abs() < 1e-6,
                "residual {residual} vs oracle {oracle}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn dp_update_output_is_convex(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ns = rng.gen_range(2..4);
            let m = random_model(&mut rng, ns, 2, 2);
            let set = random_set(&mut rng, ns, 2, 3);
            let updated = dp_update(&m, &set, &Tolerances::default()).unwrap();
            for _ in 0..50 {
                let b1 = random_belief(&mut rng, ns);
                let b2 = random_belief(&mut rng, ns);
                let lambda: f64 = rng.gen();
                let mix = Belief::new(
                    b1.probs()
                        .iter()
                        .zip(b2.probs())
                        .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
                        .collect(),
                )
                .unwrap();
                let lhs = evaluate_at(&updated, &mix).0;
                let rhs = lambda * evaluate_at(&updated, &b1).0
                    + (1.0 - lambda) * evaluate_at(&updated, &b2).0;
                prop_assert!(lhs <= rhs + 1e-9);
            }
        }

        #[test]
        fn prune_preserves_function_values(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ns = rng.gen_range(2..5);
            let count = rng.gen_range(2..8);
            let set = random_set(&mut rng, ns, 1, count);
            let pruned = prune_to_minimal(&set, &Tolerances::default()).unwrap();
            for _ in 0..1000 {
                let b = random_belief(&mut rng, ns);
                let before = evaluate_at(&set, &b).0;
                let after = evaluate_at(&pruned, &b).0;
                prop_assert!((before - after).abs() < 1e-10);
            }
        }

        #[test]
        fn dp_update_is_deterministic(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ns = rng.gen_range(2..4);
            let m = random_model(&mut rng, ns, 2, 2);
            let set = random_set(&mut rng, ns, 2, 3);
            let tol = Tolerances::default();
            let first = dp_update(&m, &set, &tol).unwrap();
            let second = dp_update(&m, &set, &tol).unwrap();
            prop_assert_eq!(first.vectors(), second.vectors());
        }

        #[test]
        fn dp_update_annotations_reconstruct_the_vector(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ns = rng.gen_range(2..4);
            let nz = rng.gen_range(1..3);
            let m = random_model(&mut rng, ns, 2, nz);
            let set = random_set(&mut rng, ns, nz, 3);
            let updated = dp_update(&m, &set, &Tolerances::default()).unwrap();
            for out in updated.vectors() {
                for s in 0..ns {
                    let mut expect = m.reward(s, out.action);
                    for z in 0..nz {
                        let chosen = &set.vectors()[out.successors[z]];
                        expect += m.discount() * backproject(&m, out.action, z, &chosen.values)[s];
                    }
                    prop_assert!((out.values[s] - expect).abs() < 1e-9);
                }
            }
        }
    }
}
