//! Wasserstein filtering (WF) and Wasserstein collaborative filtering (WCF)
//! for recommending cold-start items to existing users.
//!
//! A user's taste over the items they interacted with is a distribution `p`
//! on the interacted catalog `V`. Their taste over the cold catalog `C` is a
//! distribution `q` that should sit close to `p` under an entropic optimal
//! transport distance whose ground cost comes from item content similarity.
//!
//! - [`transport`]: simplex vectors, cost matrices, Sinkhorn, an exact LP
//!   oracle and the closed-form conjugate of the smoothed distance.
//! - [`wfilter`]: per-user inference in closed form and ranking.
//! - [`wcf`]: low-rank factorization `D Λ` fitted by dual block-coordinate descent.
//! - [`data`]: MovieLens/tag-genome ingestion, cost construction and cold-start splits.
//! - [`metrics`]: AP/MAP, NDCG@R and Recall@R.

pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod transport;
pub mod wcf;
pub mod wfilter;

pub use error::{Error, Result};

pub type ItemId = u64;
pub type UserId = u64;

/// Entropic regularization strength used unless configured otherwise.
pub const DEFAULT_GAMMA: f64 = 0.05;
/// Latent dimension used unless configured otherwise.
pub const DEFAULT_LATENT_DIM: usize = 30;
/// Ranking cutoff for NDCG@R and Recall@R.
pub const DEFAULT_SCOPE: usize = 20;
