//! Exact (unregularized) transport for test-scale instances.
//!
//! A dense two-phase simplex on the transportation LP with Bland's rule, so
//! it terminates on degenerate instances. Meant as ground truth for Sinkhorn
//! as gamma goes to zero, not as a production solver.

use nalgebra::DMatrix;

use super::{check_marginals, SimplexVector, TransportPlan};
use crate::error::{Error, Result};

/// Largest `n * s` the oracle accepts by default.
pub const DEFAULT_ORACLE_CAP: usize = 400;

const EPS: f64 = 1e-12;

pub fn exact_ot_oracle(p: &SimplexVector, q: &SimplexVector, costs: &DMatrix<f64>) -> Result<TransportPlan> {
    exact_ot_oracle_with_cap(p, q, costs, DEFAULT_ORACLE_CAP)
}

pub fn exact_ot_oracle_with_cap(
    p: &SimplexVector,
    q: &SimplexVector,
    costs: &DMatrix<f64>,
    cap: usize,
) -> Result<TransportPlan> {
    let (n, s) = costs.shape();
    check_marginals(p, q, n, s)?;
    if n * s > cap {
        return Err(Error::OracleTooLarge { cells: n * s, cap });
    }
    // Variables x_ij at column i * s + j. Row constraints for every i, column
    // constraints for all but the last j (implied by total mass).
    let vars = n * s;
    let mut a = Vec::with_capacity(n + s - 1);
    let mut b = Vec::with_capacity(n + s - 1);
    for i in 0..n {
        let mut row = vec![0.0; vars];
        for j in 0..s {
            row[i * s + j] = 1.0;
        }
        a.push(row);
        b.push(p.as_slice()[i]);
    }
    for j in 0..s.saturating_sub(1) {
        let mut row = vec![0.0; vars];
        for i in 0..n {
            row[i * s + j] = 1.0;
        }
        a.push(row);
        b.push(q.as_slice()[j]);
    }
    let c: Vec<f64> = (0..vars).map(|v| costs[(v / s, v % s)]).collect();
    let x = simplex_min(a, b, &c)?;
    let plan = DMatrix::from_fn(n, s, |i, j| x[i * s + j].max(0.0));
    let transport_cost = (0..n)
        .flat_map(|i| (0..s).map(move |j| (i, j)))
        .map(|(i, j)| plan[(i, j)] * costs[(i, j)])
        .sum();
    let marginal_violation = {
        let rows = plan
            .row_iter()
            .zip(p.as_slice())
            .map(|(r, pi)| (r.sum() - pi).abs())
            .fold(0.0, f64::max);
        let cols = plan
            .column_iter()
            .zip(q.as_slice())
            .map(|(c, qj)| (c.sum() - qj).abs())
            .fold(0.0, f64::max);
        rows.max(cols)
    };
    Ok(TransportPlan {
        plan,
        transport_cost,
        regularized_value: transport_cost,
        iterations: 0,
        marginal_violation,
    })
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    reduced: Vec<f64>,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let piv = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rhs[r] /= piv;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r];
        for (k, row) in self.rows.iter_mut().enumerate() {
            if k == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                self.rhs[k] -= f * pivot_rhs;
            }
        }
        let f = self.reduced[col];
        if f != 0.0 {
            for (x, y) in self.reduced.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
        }
        self.basis[r] = col;
    }

    fn reset_costs(&mut self, cost: &[f64]) {
        self.reduced = cost.to_vec();
        for (r, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (x, y) in self.reduced.iter_mut().zip(&self.rows[r]) {
                    *x -= cb * y;
                }
            }
        }
    }

    /// Bland's rule iterations over the columns `< allowed`.
    fn optimize(&mut self, allowed: usize) -> Result<()> {
        let max_pivots = 50 * (self.rows.len() + allowed) * (self.rows.len() + 1);
        for _ in 0..max_pivots {
            let Some(col) = (0..allowed).find(|&j| self.reduced[j] < -EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                if row[col] > EPS {
                    let ratio = self.rhs[r] / row[col];
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bratio)) => {
                            if ratio < bratio - EPS || (ratio <= bratio + EPS && self.basis[r] < self.basis[br]) {
                                Some((r, ratio))
                            } else {
                                Some((br, bratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Domain("transport LP is unbounded".into()));
            };
            self.pivot(r, col);
        }
        Err(Error::NotConverged {
            iterations: max_pivots,
            violation: f64::NAN,
        })
    }
}

/// `min c.x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
fn simplex_min(a: Vec<Vec<f64>>, b: Vec<f64>, c: &[f64]) -> Result<Vec<f64>> {
    let m = a.len();
    let vars = c.len();
    let total = vars + m;
    let rows: Vec<Vec<f64>> = a
        .into_iter()
        .enumerate()
        .map(|(r, mut row)| {
            row.resize(total, 0.0);
            row[vars + r] = 1.0;
            row
        })
        .collect();
    let mut t = Tableau {
        rows,
        rhs: b,
        basis: (vars..total).collect(),
        reduced: vec![0.0; total],
    };
    let mut phase1 = vec![0.0; total];
    phase1[vars..].iter_mut().for_each(|c| *c = 1.0);
    t.reset_costs(&phase1);
    t.optimize(total)?;
    let infeasibility: f64 = t
        .basis
        .iter()
        .zip(&t.rhs)
        .filter(|(bv, _)| **bv >= vars)
        .map(|(_, v)| *v)
        .sum();
    if infeasibility > 1e-9 {
        return Err(Error::Domain(format!("transport LP infeasible (residual {infeasibility:e})")));
    }
    // Drive zero-valued artificials out of the basis; drop redundant rows.
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] >= vars {
            if let Some(col) = (0..vars).find(|&j| t.rows[r][j].abs() > 1e-9) {
                t.pivot(r, col);
            } else {
                t.rows.remove(r);
                t.rhs.remove(r);
                t.basis.remove(r);
                continue;
            }
        }
        r += 1;
    }
    let mut phase2 = c.to_vec();
    phase2.resize(total, 0.0);
    t.reset_costs(&phase2);
    t.optimize(vars)?;
    let mut x = vec![0.0; vars];
    for (r, &bv) in t.basis.iter().enumerate() {
        if bv < vars {
            x[bv] = t.rhs[r];
        }
    }
    Ok(x)
}
