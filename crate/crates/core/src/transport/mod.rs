//! Entropic optimal transport between a distribution over interacted items
//! and one over cold-start items.

mod conjugate;
mod exact;
mod sinkhorn;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ItemId;

pub use conjugate::{
    conjugate_grad, conjugate_value, conjugate_value_and_grad, smoothed_distance_at_gradient,
};
pub use exact::{exact_ot_oracle, exact_ot_oracle_with_cap, DEFAULT_ORACLE_CAP};
pub use sinkhorn::{sinkhorn, sinkhorn_with_kernel, SinkhornOptions};

/// Tolerance on the total mass of a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Below this regularization Sinkhorn always runs in the log domain.
pub const LOG_DOMAIN_GAMMA: f64 = 0.01;

/// A probability vector: nonnegative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector {
    weights: DVector<f64>,
}

impl SimplexVector {
    /// Builds a simplex vector by renormalizing `weights`.
    ///
    /// Rejects negative or non-finite entries and an all-zero input.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite()) {
            return Err(Error::Domain(format!("non-finite weight {w}")));
        }
        if let Some(w) = weights.iter().find(|w| **w < 0.0) {
            return Err(Error::Domain(format!("negative weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("all-zero weights cannot be normalized".into()));
        }
        if weights.is_empty() {
            return Err(Error::Domain("empty weight vector".into()));
        }
        let weights = DVector::from_iterator(weights.len(), weights.into_iter().map(|w| w / total));
        Ok(Self { weights })
    }

    pub fn uniform(len: usize) -> Self {
        assert!(len > 0, "uniform simplex vector needs at least one entry");
        Self {
            weights: DVector::from_element(len, 1.0 / len as f64),
        }
    }

    /// Wraps a vector that is already a distribution up to rounding.
    pub(crate) fn from_normalized(weights: DVector<f64>) -> Self {
        debug_assert!(weights.iter().all(|w| *w >= 0.0));
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.weights.as_slice().to_vec()
    }
}

/// Pairwise utility cost between interacted items (rows) and cold items (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    costs: DMatrix<f64>,
    row_ids: Vec<ItemId>,
    col_ids: Vec<ItemId>,
}

impl CostMatrix {
    pub fn new(costs: DMatrix<f64>, row_ids: Vec<ItemId>, col_ids: Vec<ItemId>) -> Result<Self> {
        if costs.nrows() != row_ids.len() {
            return Err(Error::DimensionMismatch {
                what: "cost rows vs row ids",
                expected: row_ids.len(),
                got: costs.nrows(),
            });
        }
        if costs.ncols() != col_ids.len() {
            return Err(Error::DimensionMismatch {
                what: "cost columns vs column ids",
                expected: col_ids.len(),
                got: costs.ncols(),
            });
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(Error::Domain(format!("cost entries must be finite and >= 0, got {c}")));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &row_ids {
            if !seen.insert(*id) {
                return Err(Error::Domain(format!("duplicate row item {id}")));
            }
        }
        let mut cols = std::collections::HashSet::new();
        for id in &col_ids {
            if !cols.insert(*id) {
                return Err(Error::Domain(format!("duplicate column item {id}")));
            }
            if seen.contains(id) {
                return Err(Error::Domain(format!("item {id} is both a row and a column")));
            }
        }
        Ok(Self {
            costs,
            row_ids,
            col_ids,
        })
    }

    /// Wraps a bare matrix, numbering rows `0..n` and columns `n..n+s`.
    pub fn from_matrix(costs: DMatrix<f64>) -> Result<Self> {
        let n = costs.nrows() as ItemId;
        let s = costs.ncols() as ItemId;
        Self::new(costs, (0..n).collect(), (n..n + s).collect())
    }

    pub fn costs(&self) -> &DMatrix<f64> {
        &self.costs
    }

    pub fn row_ids(&self) -> &[ItemId] {
        &self.row_ids
    }

    pub fn col_ids(&self) -> &[ItemId] {
        &self.col_ids
    }

    pub fn nrows(&self) -> usize {
        self.costs.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.costs.ncols()
    }

    pub fn transpose(&self) -> Self {
        Self {
            costs: self.costs.transpose(),
            row_ids: self.col_ids.clone(),
            col_ids: self.row_ids.clone(),
        }
    }
}

/// `K = exp(-M / gamma)`, kept in the log domain and materialized when every
/// entry is a normal floating point number.
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    gamma: f64,
    log_kernel: DMatrix<f64>,
    kernel: Option<DMatrix<f64>>,
}

impl GibbsKernel {
    pub fn new(costs: &DMatrix<f64>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma must be positive, got {gamma}")));
        }
        if costs.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("cost matrix"));
        }
        let log_kernel = costs.map(|c| -c / gamma);
        let kernel = log_kernel.map(f64::exp);
        let representable = kernel.iter().all(|k| k.is_normal());
        Ok(Self {
            gamma,
            log_kernel,
            kernel: representable.then_some(kernel),
        })
    }

    pub fn from_cost(costs: &CostMatrix, gamma: f64) -> Result<Self> {
        Self::new(costs.costs(), gamma)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `-M / gamma`.
    pub fn log_kernel(&self) -> &DMatrix<f64> {
        &self.log_kernel
    }

    /// The materialized kernel, `None` when some entry would underflow.
    pub fn kernel(&self) -> Option<&DMatrix<f64>> {
        self.kernel.as_ref()
    }

    pub fn nrows(&self) -> usize {
        self.log_kernel.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.log_kernel.ncols()
    }

    /// Recovers the cost entry `M_ij`.
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        -self.log_kernel[(i, j)] * self.gamma
    }
}

/// A coupling with marginals `p` (rows) and `q` (columns).
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: DMatrix<f64>,
    /// `<T, M>`.
    pub transport_cost: f64,
    /// `<T, M> - gamma * h(T)`; equals `transport_cost` for unregularized plans.
    pub regularized_value: f64,
    pub iterations: usize,
    /// Largest absolute marginal violation of `plan`.
    pub marginal_violation: f64,
}

impl TransportPlan {
    pub fn row_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.plan.nrows(), self.plan.row_iter().map(|r| r.sum()))
    }

    pub fn col_sums(&self) -> DVector<f64> {
        DVector::from_iterator(self.plan.ncols(), self.plan.column_iter().map(|c| c.sum()))
    }
}

/// Conjugate variable of the cold-item marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential(DVector<f64>);

impl DualPotential {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual potential"));
        }
        Ok(Self(values))
    }

    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

/// Shannon entropy `-sum x log x` with `0 log 0 = 0`.
pub fn entropy(values: &[f64]) -> Result<f64> {
    let mut h = 0.0;
    for &x in values {
        if x < 0.0 || x.is_nan() {
            return Err(Error::Domain(format!("entropy of negative mass {x}")));
        }
        if x > 0.0 {
            h -= x * x.ln();
        }
    }
    Ok(h)
}

/// Numerically stable `log sum exp` ignoring `-inf` terms.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn check_marginals(p: &SimplexVector, q: &SimplexVector, rows: usize, cols: usize) -> Result<()> {
    if p.len() != rows {
        return Err(Error::DimensionMismatch {
            what: "p vs cost rows",
            expected: rows,
            got: p.len(),
        });
    }
    if q.len() != cols {
        return Err(Error::DimensionMismatch {
            what: "q vs cost columns",
            expected: cols,
            got: q.len(),
        });
    }
    Ok(())
}

/// Independent lower bound on `W_gamma(p, q)` for tests: the entropic dual
/// objective at log-domain Sinkhorn iterates, maximized over `iters` sweeps.
#[cfg(test)]
pub(crate) fn dual_lower_bound(p: &[f64], q: &[f64], costs: &DMatrix<f64>, gamma: f64, iters: usize) -> f64 {
    let (n, s) = costs.shape();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; s];
    let mut best = f64::NEG_INFINITY;
    for _ in 0..iters {
        for i in 0..n {
            f[i] = if p[i] > 0.0 {
                gamma * p[i].ln() - gamma * log_sum_exp((0..s).map(|j| (g[j] - costs[(i, j)]) / gamma))
            } else {
                f64::NEG_INFINITY
            };
        }
        for j in 0..s {
            g[j] = if q[j] > 0.0 {
                gamma * q[j].ln() - gamma * log_sum_exp((0..n).map(|i| (f[i] - costs[(i, j)]) / gamma))
            } else {
                f64::NEG_INFINITY
            };
        }
        // <f,p> + <g,q> - gamma sum exp((f+g-M)/gamma) + gamma, with the plan mass at 1
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..s {
                let e = (f[i] + g[j] - costs[(i, j)]) / gamma;
                if e > f64::NEG_INFINITY {
                    mass += e.exp();
                }
            }
        }
        let lin: f64 = p.iter().zip(&f).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum::<f64>()
            + q.iter().zip(&g).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum::<f64>();
        best = best.max(lin - gamma * mass + gamma);
    }
    best
}
