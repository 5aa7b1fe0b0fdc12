//! Admissible upper bound from the underlying fully observable MDP.

use crate::model::{Belief, PomdpModel};

/// Residual the MDP solution is iterated down to.
pub const MDP_RESIDUAL_BOUND: f64 = 1e-10;

/// State values of the fully observable relaxation. Their belief-weighted
/// average bounds the optimal POMDP value from above.
#[derive(Debug, Clone)]
pub struct MdpBound {
    pub state_values: Vec<f64>,
}

impl MdpBound {
    /// `UB(b) = sum_s b(s) V_MDP(s)`.
    pub fn upper_bound(&self, b: &Belief) -> f64 {
        self.state_values
            .iter()
            .zip(b.probs())
            .map(|(v, p)| v * p)
            .sum()
    }
}

/// Solves `V(s) = max_a [r(s,a) + beta * sum_s' Pr(s'|s,a) V(s')]` by value
/// iteration. The discount contraction guarantees convergence.
pub fn mdp_upper_bound(model: &PomdpModel) -> MdpBound {
    let ns = model.n_states();
    let mut values = vec![0.0; ns];
    loop {
        let mut next = vec![0.0; ns];
        let mut delta = 0.0_f64;
        for s in 0..ns {
            let mut best = f64::NEG_INFINITY;
            for a in 0..model.n_actions() {
                let q = model.reward(s, a)
                    + model.discount()
                        * model
                            .transition_row(s, a)
                            .iter()
                            .zip(&values)
                            .map(|(p, v)| p * v)
                            .sum::<f64>();
                best = best.max(q);
            }
            next[s] = best;
            delta = delta.max((next[s] - values[s]).abs());
        }
        values = next;
        // After the sup-change drops this low the Bellman residual of the
        // iterate is below the bound as well.
        if delta <= MDP_RESIDUAL_BOUND / 2.0 {
            return MdpBound { state_values: values };
        }
    }
}
