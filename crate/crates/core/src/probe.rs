//! Deterministic low-discrepancy beliefs for convergence probes.
//!
//! Solver statistics sample the value function at a fixed set of beliefs so
//! runs are comparable. The set comes from a Kronecker sequence (powers of
//! the generalized golden ratio) in the unit cube, seeded by a label hash,
//! mapped onto the simplex through sorted spacings.

/// FNV-1a, so seeds are stable across platforms and toolchains.
fn fnv1a(label: &str) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for byte in label.bytes() {
        hash ^= byte as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// `count` beliefs over `dimension` states, deterministic in `label`.
pub fn probe_beliefs(dimension: usize, count: usize, label: &str) -> Vec<Vec<f64>> {
    assert!(dimension >= 1);
    if dimension == 1 {
        return vec![vec![1.0]; count];
    }
    let dims = dimension - 1;

    // Generalized golden ratio: the root of x^(d+1) = x + 1.
    let mut phi = 1.0_f64;
    for _ in 0..32 {
        phi = (1.0 + phi).powf(1.0 / (dims as f64 + 1.0));
    }
    let alphas: Vec<f64> = (1..=dims).map(|j| (1.0 / phi).powi(j as i32) % 1.0).collect();

    let mut state = fnv1a(label);
    let offsets: Vec<f64> = (0..dims)
        .map(|_| (splitmix64(&mut state) >> 11) as f64 / (1u64 << 53) as f64)
        .collect();

    (0..count)
        .map(|k| {
            let mut cuts: Vec<f64> = (0..dims)
                .map(|j| (offsets[j] + (k as f64 + 1.0) * alphas[j]).fract())
                .collect();
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            // Spacings of the sorted cut points partition [0,1].
            let mut belief = Vec::with_capacity(dimension);
            let mut prev = 0.0;
            for &c in &cuts {
                belief.push(c - prev);
                prev = c;
            }
            belief.push(1.0 - prev);
            belief
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probes_are_valid_beliefs() {
        for dim in 1..6 {
            for b in probe_beliefs(dim, 50, "some-problem") {
                assert_eq!(b.len(), dim);
                assert!(b.iter().all(|&p| (0.0..=1.0).contains(&p)));
                let sum: f64 = b.iter().sum();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probes_are_label_deterministic() {
        let a = probe_beliefs(3, 20, "tiger");
        let b = probe_beliefs(3, 20, "tiger");
        let c = probe_beliefs(3, 20, "maze");
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn probes_spread_over_the_simplex() {
        let probes = probe_beliefs(2, 200, "spread");
        let low = probes.iter().filter(|b| b[0] < 0.25).count();
        let high = probes.iter().filter(|b| b[0] > 0.75).count();
        assert!(low > 20 && high > 20);
    }
}
