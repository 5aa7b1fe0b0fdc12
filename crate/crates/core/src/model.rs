//! POMDP model and belief-state arithmetic.
//!
//! A discrete POMDP is given by finite state, action and observation sets,
//! a transition table `Pr(s'|s,a)`, an observation table `Pr(z|s',a)`, a
//! reward table `r(s,a)` and a discount factor in (0,1). Beliefs are dense
//! probability vectors over states; the belief update is the usual Bayes
//! step with `Pr(z|b,a)` as the normalizing factor.

use thiserror::Error;

/// Band within which a slightly off probability row is renormalized instead
/// of rejected. Absorbs decimal rounding in problem files without masking
/// genuinely broken models.
pub const RENORMALIZATION_BAND: f64 = 1e-6;

/// Tolerance for the stochasticity invariants after construction.
pub const STOCHASTICITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("{what}: expected {expected} entries, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty {what} set")]
    EmptySet { what: &'static str },

    #[error("stochasticity violation: {table} row (action {action}, state {state}) sums to {sum}")]
    StochasticityViolation {
        table: &'static str,
        action: usize,
        state: usize,
        sum: f64,
    },

    #[error("negative probability {value} in {table} (action {action}, state {state})")]
    NegativeProbability {
        table: &'static str,
        action: usize,
        state: usize,
        value: f64,
    },

    #[error("probability {value} > 1 in {table} (action {action}, state {state})")]
    ProbabilityAboveOne {
        table: &'static str,
        action: usize,
        state: usize,
        value: f64,
    },

    #[error("discount factor {0} outside the open interval (0,1)")]
    DiscountOutOfRange(f64),

    #[error("non-finite reward for state {state}, action {action}")]
    NonFiniteReward { state: usize, action: usize },

    #[error("belief entry {value} is negative")]
    NegativeBeliefEntry { value: f64 },

    #[error("belief sums to {sum}, not 1")]
    BeliefNotNormalized { sum: f64 },

    #[error("belief has {got} entries, model has {expected} states")]
    BeliefDimension { expected: usize, got: usize },

    #[error("observation {observation} has probability 0 under action {action} from this belief")]
    ImpossibleObservation { action: usize, observation: usize },
}

/// A validated discrete POMDP.
///
/// Tables are stored dense and row-major:
/// transition `[a][s][s']`, observation `[a][s'][z]`, reward `[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PomdpModel {
    states: Vec<String>,
    actions: Vec<String>,
    observations: Vec<String>,
    transition: Vec<f64>,
    observation_fn: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

impl PomdpModel {
    /// Validates raw table data and builds a model.
    ///
    /// Rows whose sums deviate from 1 by at most [`RENORMALIZATION_BAND`]
    /// are renormalized; larger deviations are stochasticity violations.
    pub fn new(
        states: Vec<String>,
        actions: Vec<String>,
        observations: Vec<String>,
        mut transition: Vec<f64>,
        mut observation_fn: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        let (ns, na, nz) = (states.len(), actions.len(), observations.len());
        if ns == 0 {
            return Err(ModelError::EmptySet { what: "state" });
        }
        if na == 0 {
            return Err(ModelError::EmptySet { what: "action" });
        }
        if nz == 0 {
            return Err(ModelError::EmptySet { what: "observation" });
        }
        if transition.len() != na * ns * ns {
            return Err(ModelError::DimensionMismatch {
                what: "transition table",
                expected: na * ns * ns,
                got: transition.len(),
            });
        }
        if observation_fn.len() != na * ns * nz {
            return Err(ModelError::DimensionMismatch {
                what: "observation table",
                expected: na * ns * nz,
                got: observation_fn.len(),
            });
        }
        if reward.len() != ns * na {
            return Err(ModelError::DimensionMismatch {
                what: "reward table",
                expected: ns * na,
                got: reward.len(),
            });
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(ModelError::DiscountOutOfRange(discount));
        }
        for s in 0..ns {
            for a in 0..na {
                if !reward[s * na + a].is_finite() {
                    return Err(ModelError::NonFiniteReward { state: s, action: a });
                }
            }
        }

        for a in 0..na {
            for s in 0..ns {
                let row = &mut transition[(a * ns + s) * ns..(a * ns + s + 1) * ns];
                validate_row(row, "transition", a, s)?;
            }
            for s_next in 0..ns {
                let row = &mut observation_fn[(a * ns + s_next) * nz..(a * ns + s_next + 1) * nz];
                validate_row(row, "observation", a, s_next)?;
            }
        }

        Ok(Self {
            states,
            actions,
            observations,
            transition,
            observation_fn,
            reward,
            discount,
        })
    }

    /// Builds a model with generated entity names (`s0`, `a0`, `z0`, ...).
    pub fn from_tables(
        n_states: usize,
        n_actions: usize,
        n_observations: usize,
        transition: Vec<f64>,
        observation_fn: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        let name = |prefix: &str, n: usize| (0..n).map(|i| format!("{prefix}{i}")).collect();
        Self::new(
            name("s", n_states),
            name("a", n_actions),
            name("z", n_observations),
            transition,
            observation_fn,
            reward,
            discount,
        )
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn state_names(&self) -> &[String] {
        &self.states
    }

    pub fn action_names(&self) -> &[String] {
        &self.actions
    }

    pub fn observation_names(&self) -> &[String] {
        &self.observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `Pr(s'|s,a)`.
    pub fn transition(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(a * self.n_states() + s) * self.n_states() + s_next]
    }

    /// The row `Pr(.|s,a)` over successor states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let ns = self.n_states();
        &self.transition[(a * ns + s) * ns..(a * ns + s + 1) * ns]
    }

    /// `Pr(z|s',a)`.
    pub fn observation(&self, a: usize, s_next: usize, z: usize) -> f64 {
        self.observation_fn[(a * self.n_states() + s_next) * self.n_observations() + z]
    }

    /// The row `Pr(.|s',a)` over observations.
    pub fn observation_row(&self, a: usize, s_next: usize) -> &[f64] {
        let nz = self.n_observations();
        let base = (a * self.n_states() + s_next) * nz;
        &self.observation_fn[base..base + nz]
    }

    /// `r(s,a)`.
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions() + a]
    }

    /// The reward column for action `a` as an |S|-vector.
    pub fn reward_vector(&self, a: usize) -> Vec<f64> {
        (0..self.n_states()).map(|s| self.reward(s, a)).collect()
    }

    /// Largest |r(s,a)| over the whole table.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }
}

fn validate_row(
    row: &mut [f64],
    table: &'static str,
    action: usize,
    state: usize,
) -> Result<(), ModelError> {
    for &p in row.iter() {
        if p < 0.0 || p.is_nan() {
            return Err(ModelError::NegativeProbability {
                table,
                action,
                state,
                value: p,
            });
        }
        if p > 1.0 + RENORMALIZATION_BAND {
            return Err(ModelError::ProbabilityAboveOne {
                table,
                action,
                state,
                value: p,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > RENORMALIZATION_BAND {
        return Err(ModelError::StochasticityViolation {
            table,
            action,
            state,
            sum,
        });
    }
    for p in row.iter_mut() {
        *p = (*p / sum).min(1.0);
    }
    Ok(())
}

/// A probability distribution over the model's states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief(Vec<f64>);

impl Belief {
    /// Validates entries: nonnegative, summing to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        for &p in &probs {
            if p < 0.0 || p.is_nan() {
                return Err(ModelError::NegativeBeliefEntry { value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTICITY_TOLERANCE {
            return Err(ModelError::BeliefNotNormalized { sum });
        }
        Ok(Self(probs))
    }

    /// Like [`Belief::new`] but renormalizes sums within the 1e-6 band,
    /// for belief vectors read from user input.
    pub fn normalized(probs: Vec<f64>) -> Result<Self, ModelError> {
        for &p in &probs {
            if p < 0.0 || p.is_nan() {
                return Err(ModelError::NegativeBeliefEntry { value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZATION_BAND {
            return Err(ModelError::BeliefNotNormalized { sum });
        }
        Ok(Self(probs.into_iter().map(|p| p / sum).collect()))
    }

    pub fn uniform(n_states: usize) -> Self {
        Self(vec![1.0 / n_states as f64; n_states])
    }

    /// Belief concentrated on one state.
    pub fn unit(n_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; n_states];
        probs[state] = 1.0;
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, state: usize) -> f64 {
        self.0[state]
    }
}

fn check_belief(model: &PomdpModel, b: &Belief) -> Result<(), ModelError> {
    if b.len() != model.n_states() {
        return Err(ModelError::BeliefDimension {
            expected: model.n_states(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Unnormalized posterior over successor states for every observation:
/// `numer[z][s'] = Pr(z|s',a) * sum_s Pr(s'|s,a) b(s)`.
///
/// Both [`observation_probability`] and [`belief_update`] are defined in
/// terms of these numerators, summed in the same order, so the Bayes
/// normalization identities hold exactly in floating point.
fn posterior_numerators(model: &PomdpModel, b: &Belief, a: usize) -> Vec<Vec<f64>> {
    let ns = model.n_states();
    let nz = model.n_observations();
    // predicted(s') = sum_s Pr(s'|s,a) b(s)
    let mut predicted = vec![0.0; ns];
    for s in 0..ns {
        let bs = b.get(s);
        if bs == 0.0 {
            continue;
        }
        let row = model.transition_row(s, a);
        for (s_next, p) in row.iter().enumerate() {
            predicted[s_next] += p * bs;
        }
    }
    let mut numer = vec![vec![0.0; ns]; nz];
    for s_next in 0..ns {
        let row = model.observation_row(a, s_next);
        for z in 0..nz {
            numer[z][s_next] = row[z] * predicted[s_next];
        }
    }
    numer
}

/// `Pr(z|b,a)` for every observation z. The entries sum to 1.
pub fn observation_probability(
    model: &PomdpModel,
    b: &Belief,
    a: usize,
) -> Result<Vec<f64>, ModelError> {
    check_belief(model, b)?;
    let numer = posterior_numerators(model, b, a);
    Ok(numer.iter().map(|n| n.iter().sum()).collect())
}

/// Bayes update `b_z^a`. Errors if the observation has probability zero
/// under (b,a); callers that walk a search tree must never request it.
pub fn belief_update(
    model: &PomdpModel,
    b: &Belief,
    a: usize,
    z: usize,
) -> Result<Belief, ModelError> {
    check_belief(model, b)?;
    let numer = &posterior_numerators(model, b, a)[z];
    let denom: f64 = numer.iter().sum();
    if denom <= 0.0 {
        return Err(ModelError::ImpossibleObservation { action: a, observation: z });
    }
    Ok(Belief(numer.iter().map(|n| n / denom).collect()))
}

/// Expected immediate reward `rho(b,a) = sum_s b(s) r(s,a)`.
pub fn expected_reward(model: &PomdpModel, b: &Belief, a: usize) -> f64 {
    b.probs()
        .iter()
        .enumerate()
        .map(|(s, bs)| bs * model.reward(s, a))
        .sum()
}
