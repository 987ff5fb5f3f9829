//! Dense phase-one simplex for `A z = b, z >= 0`.
//!
//! One artificial variable per row; the auxiliary objective `sum r` is driven
//! down with Dantzig pricing, switching to Bland's rule once the iteration count
//! suggests cycling. Artificial columns stay in the tableau so the optimal
//! duals can be read from their reduced costs.

use crate::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;
const PRICE_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub(crate) struct PhaseOne {
    /// Optimal value of `sum r`; zero (within tolerance) iff feasible.
    pub objective: f64,
    /// Values of the structural variables.
    pub primal: Vec<f64>,
    /// Optimal dual `y` for the rows: `A^T y <= 0`, `y <= 1`, `b^T y = objective`.
    pub dual: Vec<f64>,
}

struct Tableau {
    rows: usize,
    width: usize,
    data: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.width - 1)
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let w = self.width;
        let inv = 1.0 / self.at(pr, pc);
        for v in &mut self.data[pr * w..(pr + 1) * w] {
            *v *= inv;
        }
        let pivot_row: Vec<f64> = self.data[pr * w..(pr + 1) * w].to_vec();
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.data[r * w + pc];
            if f != 0.0 {
                for (v, p) in self.data[r * w..(r + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                self.data[r * w + pc] = 0.0;
            }
        }
        let f = self.cost[pc];
        if f != 0.0 {
            for (v, p) in self.cost.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.cost[pc] = 0.0;
        }
        self.basis[pr] = pc;
    }
}

/// `columns[j]` is column `j` of `A` (length `b.len()`).
pub(crate) fn phase_one(columns: &[Vec<f64>], b: &[f64]) -> Result<PhaseOne> {
    let m = b.len();
    let n = columns.len();
    if columns.iter().any(|c| c.len() != m) {
        return Err(Error::DimensionMismatch("simplex column length".into()));
    }
    let width = n + m + 1;
    let flip: Vec<f64> = b
        .iter()
        .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
        .collect();

    let mut data = vec![0.0; m * width];
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            data[i * width + j] = flip[i] * v;
        }
    }
    for i in 0..m {
        data[i * width + n + i] = 1.0;
        data[i * width + width - 1] = flip[i] * b[i];
    }
    // Reduced costs with c = (0, .., 0, 1, .., 1); the last slot holds -objective.
    let mut cost = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            cost[j] -= data[i * width + j];
        }
        cost[width - 1] -= data[i * width + width - 1];
    }
    let mut t = Tableau {
        rows: m,
        width,
        data,
        cost,
        basis: (n..n + m).collect(),
    };

    let max_iter = 50 * (n + m) + 100;
    let bland_after = 10 * (n + m) + 50;
    let mut iter = 0;
    loop {
        let entering = if iter < bland_after {
            let mut best = None;
            let mut best_val = -PRICE_EPS;
            for j in 0..n + m {
                if t.cost[j] < best_val {
                    best_val = t.cost[j];
                    best = Some(j);
                }
            }
            best
        } else {
            (0..n + m).find(|&j| t.cost[j] < -PRICE_EPS)
        };
        let Some(pc) = entering else { break };

        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t.at(r, pc);
            if a > PIVOT_EPS {
                let ratio = t.rhs(r) / a;
                match leave {
                    None => leave = Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-15
                            || (ratio <= lratio + 1e-15 && t.basis[r] < t.basis[lr])
                        {
                            leave = Some((r, ratio));
                        }
                    }
                }
            }
        }
        let Some((pr, _)) = leave else {
            // Phase one is bounded below by zero; an unbounded ray means the tableau went bad.
            return Err(Error::NumericalFailure(
                "unbounded phase-one direction".into(),
            ));
        };
        t.pivot(pr, pc);
        iter += 1;
        if iter > max_iter {
            return Err(Error::NumericalFailure(format!(
                "simplex did not converge in {max_iter} iterations"
            )));
        }
    }

    let mut primal = vec![0.0; n];
    let mut objective = 0.0;
    for (r, &var) in t.basis.iter().enumerate() {
        let v = t.rhs(r).max(0.0);
        if var < n {
            primal[var] = v;
        } else {
            objective += v;
        }
    }
    let dual = (0..m).map(|i| flip[i] * (1.0 - t.cost[n + i])).collect();
    Ok(PhaseOne {
        objective,
        primal,
        dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_system() {
        // z0 + z1 = 1, z0 - z1 = 0.5
        let cols = vec![vec![1.0, 1.0], vec![1.0, -1.0]];
        let out = phase_one(&cols, &[1.0, 0.5]).unwrap();
        assert!(out.objective < 1e-12);
        assert!((out.primal[0] - 0.75).abs() < 1e-12);
        assert!((out.primal[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn infeasible_system_has_farkas_dual() {
        // z0 + z1 = 1, z0 + z1 = 2
        let cols = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let b = [1.0, 2.0];
        let out = phase_one(&cols, &b).unwrap();
        assert!((out.objective - 1.0).abs() < 1e-12);
        for c in &cols {
            let s: f64 = c.iter().zip(&out.dual).map(|(a, y)| a * y).sum();
            assert!(s <= 1e-12);
        }
        let by: f64 = b.iter().zip(&out.dual).map(|(a, y)| a * y).sum();
        assert!((by - out.objective).abs() < 1e-12);
    }

    #[test]
    fn negative_rhs_rows_are_flipped() {
        // -z0 = -0.5, z0 + z1 = 1
        let cols = vec![vec![-1.0, 1.0], vec![0.0, 1.0]];
        let out = phase_one(&cols, &[-0.5, 1.0]).unwrap();
        assert!(out.objective < 1e-12);
        assert!((out.primal[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows() {
        let cols = vec![vec![1.0, 2.0, 1.0], vec![1.0, 2.0, 0.0]];
        let out = phase_one(&cols, &[1.0, 2.0, 0.3]).unwrap();
        assert!(out.objective < 1e-12);
        assert!((out.primal[0] - 0.3).abs() < 1e-12);
    }
}
