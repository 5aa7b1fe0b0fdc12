//! Monte-Carlo rollout of a controller against the model.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pomdp_core::{Belief, FiniteStateController, PomdpModel};

/// Sample mean and standard error of the discounted return.
#[derive(Debug, Clone, Copy)]
pub struct SimulationResult {
    pub mean: f64,
    pub standard_error: f64,
    pub episodes: usize,
    pub horizon: usize,
}

/// Horizon at which the discounted tail drops below 1e-3 of the value
/// scale `Rmax / (1 - beta)`.
pub fn default_horizon(model: &PomdpModel) -> usize {
    let beta = model.discount();
    let h = ((1e-3_f64).ln() / beta.ln()).ceil();
    (h as usize).clamp(1, 100_000)
}

fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let mut draw: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        draw -= p;
        if draw < 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Rolls out `episodes` trajectories of `horizon` steps. The world state is
/// drawn from `b0`, the controller starts at `start`, and each episode uses
/// an independent seed stream so results do not depend on scheduling.
pub fn simulate(
    model: &PomdpModel,
    fsc: &FiniteStateController,
    start: usize,
    b0: &Belief,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> SimulationResult {
    let mut sum = 0.0;
    let mut sum_squares = 0.0;
    for episode in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episode as u64);

        let mut state = sample_index(&mut rng, b0.probs());
        let mut node = start;
        let mut ret = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            let action = fsc.nodes()[node].action;
            ret += discount * model.reward(state, action);
            discount *= model.discount();
            let next = sample_index(&mut rng, model.transition_row(state, action));
            let z = sample_index(&mut rng, model.observation_row(action, next));
            node = fsc.nodes()[node].successors[z];
            state = next;
        }
        sum += ret;
        sum_squares += ret * ret;
    }
    let n = episodes as f64;
    let mean = sum / n;
    let variance = (sum_squares / n - mean * mean).max(0.0);
    let standard_error = if episodes > 1 {
        (variance / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    SimulationResult {
        mean,
        standard_error,
        episodes,
        horizon,
    }
}
