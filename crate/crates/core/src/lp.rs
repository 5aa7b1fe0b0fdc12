//! Small dense linear programs over the belief simplex.
//!
//! Every LP this crate needs has the same shape: maximize, over probability
//! vectors b, the minimum of a family of linear forms `rows[k] . b`. Vector
//! dominance asks it with difference rows; the Bellman residual asks it per
//! facet. The solver reduces the problem to a zero-sum matrix game: shift all
//! payoffs positive, solve the column player's LP `max 1.y : M'y <= 1, y >= 0`
//! with a tableau simplex, and read the row player's distribution off the
//! slack reduced costs. Bland's rule keeps pivoting finite and deterministic.

use crate::error::{Result, SolverError};

const PIVOT_TOLERANCE: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

/// Optimum of `max_{b in simplex} min_k rows[k] . b`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// The optimal value (may be negative).
    pub value: f64,
    /// A maximizing belief vector.
    pub witness: Vec<f64>,
}

/// Solves `max_{b in simplex} min_k rows[k] . b` for nonempty `rows` of
/// equal dimension.
pub fn maximize_min_dot(rows: &[&[f64]]) -> Result<LpSolution> {
    let m = rows.len();
    assert!(m > 0, "maximize_min_dot needs at least one row");
    let n = rows[0].len();
    assert!(n > 0, "maximize_min_dot needs dimension >= 1");
    for row in rows {
        assert_eq!(row.len(), n, "rows must share one dimension");
        if row.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::LpFailure {
                context: format!("non-finite coefficient in row {row:?}"),
            });
        }
    }

    // Shift all payoffs to be >= 1 so the game value is strictly positive.
    let min_entry = rows
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let shift = 1.0 - min_entry;

    // Tableau for max sum(y) s.t. for each i: sum_k M'[k][i] y_k <= 1, y >= 0,
    // where M'[k][i] = rows[k][i] + shift. Columns: m game variables, n
    // slacks, rhs. Row n is the objective (reduced costs, then -objective).
    let cols = m + n + 1;
    let mut tab = vec![vec![0.0; cols]; n + 1];
    for i in 0..n {
        for k in 0..m {
            tab[i][k] = rows[k][i] + shift;
        }
        tab[i][m + i] = 1.0;
        tab[i][cols - 1] = 1.0;
    }
    for k in 0..m {
        tab[n][k] = 1.0;
    }

    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut pivots = 0;
    loop {
        // Bland: entering column is the lowest index with positive reduced cost.
        let Some(enter) = (0..cols - 1).find(|&j| tab[n][j] > PIVOT_TOLERANCE) else {
            break;
        };
        // Ratio test; ties broken by the smallest basic variable index.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..n {
            let coeff = tab[i][enter];
            if coeff > PIVOT_TOLERANCE {
                let ratio = tab[i][cols - 1] / coeff;
                if ratio < best_ratio - PIVOT_TOLERANCE
                    || (ratio < best_ratio + PIVOT_TOLERANCE
                        && leave.map_or(true, |l| basis[i] < basis[l]))
                {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            // The feasible region is a subset of [0,1]^m, so this is numeric.
            return Err(SolverError::LpFailure {
                context: format!("unbounded pivot column {enter} over {m} rows, dim {n}"),
            });
        };

        pivot(&mut tab, leave, enter);
        basis[leave] = enter;
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return Err(SolverError::LpFailure {
                context: format!("pivot limit exceeded on {m} rows, dim {n}"),
            });
        }
    }

    // Objective of the column player's LP equals 1 / (shifted game value).
    let objective = -tab[n][cols - 1];
    if !(objective > 0.0) {
        return Err(SolverError::LpFailure {
            context: format!("nonpositive game objective {objective}"),
        });
    }
    // The row player's distribution is the slack reduced costs, normalized.
    let mut witness: Vec<f64> = (0..n).map(|i| (-tab[n][m + i]).max(0.0)).collect();
    let total: f64 = witness.iter().sum();
    if !(total > 0.0) {
        return Err(SolverError::LpFailure {
            context: format!("degenerate witness, slack costs sum to {total}"),
        });
    }
    witness.iter_mut().for_each(|w| *w /= total);

    Ok(LpSolution {
        value: 1.0 / objective - shift,
        witness,
    })
}

fn pivot(tab: &mut [Vec<f64>], row: usize, col: usize) {
    let cols = tab[0].len();
    let inv = 1.0 / tab[row][col];
    for j in 0..cols {
        tab[row][j] *= inv;
    }
    tab[row][col] = 1.0;
    for i in 0..tab.len() {
        if i == row {
            continue;
        }
        let factor = tab[i][col];
        if factor == 0.0 {
            continue;
        }
        for j in 0..cols {
            tab[i][j] -= factor * tab[row][j];
        }
        tab[i][col] = 0.0;
    }
}

/// Recomputes `min_k rows[k] . b` directly, for witness verification.
pub fn min_dot(rows: &[&[f64]], b: &[f64]) -> f64 {
    rows.iter()
        .map(|row| row.iter().zip(b).map(|(r, w)| r * w).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}
