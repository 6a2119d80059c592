//! Wasserstein filtering: per-user cold-start inference without factorization.
//!
//! Minimizing `W_gamma(p, q)` over the cold marginal `q` drops the column
//! constraint, and the row-separable entropic problem is solved by
//! `T = diag(p ⊘ K1) K`. Hence `q̂ = K^T (p ⊘ K1)`, which is the conjugate
//! gradient at `g = 0`.

use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::transport::{conjugate_grad, DualPotential, GibbsKernel, SimplexVector};
use crate::{ItemId, UserId};

/// A user's nonzero interactions, indexed by position in the interacted catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct UserInteractions {
    pub user_id: UserId,
    counts: Vec<(usize, f64)>,
}

impl UserInteractions {
    /// Zero values are dropped; negative or non-finite ones are rejected.
    pub fn new(user_id: UserId, counts: Vec<(usize, f64)>) -> Result<Self> {
        if let Some((i, v)) = counts.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Domain(format!(
                "user {user_id}: interaction {v} at position {i} must be finite and >= 0"
            )));
        }
        let counts = counts.into_iter().filter(|(_, v)| *v > 0.0).collect();
        Ok(Self { user_id, counts })
    }

    pub fn counts(&self) -> &[(usize, f64)] {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Items ranked by inferred preference mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// `p = r / <r, 1>` as a dense vector of length `n`.
pub fn estimate_preference(r: &UserInteractions, n: usize) -> Result<SimplexVector> {
    if r.is_empty() {
        return Err(Error::Domain(format!("user {} has no interactions", r.user_id)));
    }
    let mut dense = vec![0.0; n];
    for &(i, v) in r.counts() {
        if i >= n {
            return Err(Error::DimensionMismatch {
                what: "interaction position vs catalog size",
                expected: n,
                got: i + 1,
            });
        }
        dense[i] += v;
    }
    SimplexVector::new(dense)
}

/// The minimizer of `W_gamma(p, .)` over the cold simplex.
pub fn infer_cold(p: &SimplexVector, costs: &DMatrix<f64>, gamma: f64) -> Result<SimplexVector> {
    let kernel = GibbsKernel::new(costs, gamma)?;
    infer_cold_with_kernel(p, &kernel)
}

pub fn infer_cold_with_kernel(p: &SimplexVector, kernel: &GibbsKernel) -> Result<SimplexVector> {
    conjugate_grad(p, &DualPotential::zeros(kernel.ncols()), kernel)
}

/// Sorts by descending score, breaking ties by ascending item id.
pub fn rank_items(q: &SimplexVector, cold_ids: &[ItemId]) -> Result<RankedList> {
    rank_scores(q.as_slice(), cold_ids)
}

pub fn rank_scores(scores: &[f64], cold_ids: &[ItemId]) -> Result<RankedList> {
    if scores.len() != cold_ids.len() {
        return Err(Error::DimensionMismatch {
            what: "scores vs cold item ids",
            expected: cold_ids.len(),
            got: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| match scores[b].total_cmp(&scores[a]) {
        Ordering::Equal => cold_ids[a].cmp(&cold_ids[b]),
        other => other,
    });
    Ok(RankedList {
        items: order.iter().map(|&i| cold_ids[i]).collect(),
        scores: order.iter().map(|&i| scores[i]).collect(),
    })
}
