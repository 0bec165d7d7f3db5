//! Dense two-phase simplex for small equality-form linear programs:
//! min c.x subject to A x = b, x >= 0. Bland's rule for anti-cycling.
//!
//! Problem sizes here are a few hundred variables by a few dozen
//! constraints, so a plain dense tableau is fine.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Lp {
    /// Constraint matrix, row major, m x n.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    /// Objective coefficients (minimized); all zeros for pure feasibility.
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
}

const TOL: f64 = 1e-9;

struct Tableau {
    /// m x (n_total + 1) with the rhs in the last column.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_total: usize,
}

impl Tableau {
    fn pivot(&mut self, row: usize, col: usize) {
        let piv = self.rows[row][col];
        for v in self.rows[row].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[row].clone();
        for (i, r) in self.rows.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let factor = r[col];
            if factor != 0.0 {
                for (v, p) in r.iter_mut().zip(&pivot_row) {
                    *v -= factor * p;
                }
            }
        }
        self.basis[row] = col;
    }

    /// Bland's rule: entering = lowest-index column with negative reduced
    /// cost, leaving = lowest basis index among minimum-ratio rows.
    fn optimize(&mut self, cost: &[f64], allowed: &dyn Fn(usize) -> bool) -> Result<bool> {
        let m = self.rows.len();
        for _ in 0..200_000 {
            // Reduced costs r_j = c_j - c_B . column_j.
            let cb: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
            let mut entering = None;
            for j in 0..self.n_total {
                if !allowed(j) || self.basis.contains(&j) {
                    continue;
                }
                let mut r = cost[j];
                for i in 0..m {
                    r -= cb[i] * self.rows[i][j];
                }
                if r < -TOL {
                    entering = Some(j);
                    break;
                }
            }
            let Some(col) = entering else {
                return Ok(true); // optimal
            };
            let mut leaving: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.rows[i][col];
                if a > TOL {
                    let ratio = self.rows[i][self.n_total] / a;
                    let better = match leaving {
                        None => true,
                        Some((li, lr)) => {
                            ratio < lr - TOL
                                || (ratio < lr + TOL && self.basis[i] < self.basis[li])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((row, _)) = leaving else {
                return Ok(false); // unbounded
            };
            self.pivot(row, col);
        }
        Err(Error::Numeric("simplex iteration limit reached".into()))
    }
}

/// Solve the LP. `b` entries may have either sign; rows are flipped
/// internally.
pub fn solve(lp: &Lp) -> Result<LpOutcome> {
    let m = lp.b.len();
    let n = lp.c.len();
    if lp.a.len() != m || lp.a.iter().any(|r| r.len() != n) {
        return Err(Error::Numeric("inconsistent LP dimensions".into()));
    }

    let n_total = n + m; // artificials appended
    let mut rows = Vec::with_capacity(m);
    for i in 0..m {
        let flip = if lp.b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; n_total + 1];
        for j in 0..n {
            row[j] = flip * lp.a[i][j];
        }
        row[n + i] = 1.0;
        row[n_total] = flip * lp.b[i];
        rows.push(row);
    }
    let mut t = Tableau {
        rows,
        basis: (n..n_total).collect(),
        n_total,
    };

    // Phase 1: minimize the sum of artificials.
    let mut phase1_cost = vec![0.0; n_total];
    for c in phase1_cost.iter_mut().skip(n) {
        *c = 1.0;
    }
    if !t.optimize(&phase1_cost, &|_| true)? {
        return Err(Error::Numeric("phase-1 problem unbounded".into()));
    }
    let phase1_obj: f64 = t
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &j)| j >= n)
        .map(|(i, _)| t.rows[i][n_total])
        .sum();
    if phase1_obj > 1e-7 {
        return Ok(LpOutcome::Infeasible);
    }

    // Drive remaining zero-level artificials out of the basis when possible.
    for i in 0..m {
        if t.basis[i] >= n {
            if let Some(col) = (0..n).find(|&j| t.rows[i][j].abs() > TOL) {
                t.pivot(i, col);
            }
        }
    }

    // Phase 2 on the original objective; artificials may not re-enter.
    let mut cost = vec![0.0; n_total];
    cost[..n].copy_from_slice(&lp.c);
    if !t.optimize(&cost, &|j| j < n)? {
        return Ok(LpOutcome::Unbounded);
    }

    let mut x = vec![0.0; n];
    for (i, &j) in t.basis.iter().enumerate() {
        if j < n {
            x[j] = t.rows[i][n_total].max(0.0);
        }
    }
    let objective = lp.c.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome::Optimal { x, objective })
}
