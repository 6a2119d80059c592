//! Wasserstein collaborative filtering.
//!
//! Cold-item preferences of all users are approximated by `D Λ` with
//! `D` (`s x k`) and `Λ` (`k x m`), fitted by minimizing
//! `sum_u W_gamma(p_u, D Λ_u)` under the constraint that every column of
//! `D Λ` is a distribution. Training alternates [`lambda_step`] and
//! [`d_step`] until the relative objective change drops below a tolerance.

mod linalg;
mod persist;
mod steps;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transport::{sinkhorn_with_kernel, CostMatrix, GibbsKernel, SimplexVector, SinkhornOptions};
use crate::{ItemId, UserId};

pub use linalg::RANK_TOL;
pub use persist::{load_model, save_model};
pub use steps::{d_step, lambda_step, DualSolverOptions, DualState};

/// A fitted (or freshly initialized) factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    /// `D`, `s x k`.
    pub dictionary: DMatrix<f64>,
    /// `Λ`, `k x m`.
    pub loadings: DMatrix<f64>,
    pub gamma: f64,
    pub k: usize,
    pub seed: u64,
    /// Cold item for each row of `D`.
    pub item_ids: Vec<ItemId>,
    /// User for each column of `Λ`.
    pub user_ids: Vec<UserId>,
    /// Objective after each outer iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    /// Relative objective change that ends training.
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
    pub dual: DualSolverOptions,
    /// Reinitializations allowed per step when a factor is rank deficient.
    pub max_reinit: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            tol: 1e-5,
            max_outer: 50,
            seed: 0,
            dual: DualSolverOptions::default(),
            max_reinit: 5,
        }
    }
}

fn random_dictionary(s: usize, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut d = DMatrix::from_fn(s, k, |_, _| rng.gen::<f64>());
    for mut col in d.column_iter_mut() {
        let total = col.sum();
        col /= total;
    }
    d
}

/// Random dictionary with unit-sum columns and loadings mapping every user to
/// the uniform distribution. When `k < s` the loadings are the least-squares
/// fit restricted to unit total mass, so `D Λ` columns still sum to one.
pub fn init_factors(s: usize, m: usize, k: usize, seed: u64) -> Result<FactorModel> {
    if k == 0 || k > s.min(m) {
        return Err(Error::InvalidArgument(format!(
            "latent dimension {k} must lie in 1..={}",
            s.min(m)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dictionary = random_dictionary(s, k, &mut rng);
    let uniform = DVector::from_element(s, 1.0 / s as f64);
    let column = linalg::unit_sum_least_squares(&dictionary, &uniform, "dictionary D")?;
    let loadings = DMatrix::from_fn(k, m, |r, _| column[r]);
    Ok(FactorModel {
        dictionary,
        loadings,
        gamma: crate::DEFAULT_GAMMA,
        k,
        seed,
        item_ids: (0..s as ItemId).collect(),
        user_ids: (0..m as UserId).collect(),
        objective_trace: Vec::new(),
    })
}

impl FactorModel {
    pub fn num_items(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn num_users(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn with_user_ids(mut self, user_ids: Vec<UserId>) -> Result<Self> {
        if user_ids.len() != self.num_users() {
            return Err(Error::DimensionMismatch {
                what: "user ids vs loadings columns",
                expected: self.num_users(),
                got: user_ids.len(),
            });
        }
        self.user_ids = user_ids;
        Ok(self)
    }

    /// `D Λ`, one column per user, before any cleanup.
    pub fn fitted(&self) -> DMatrix<f64> {
        &self.dictionary * &self.loadings
    }

    /// Largest departure of a `D Λ` column from the simplex (negative mass
    /// or total mass off one).
    pub fn simplex_violation(&self) -> f64 {
        self.fitted()
            .column_iter()
            .map(|c| {
                let neg = c.iter().fold(0.0f64, |a, x| a.max(-x));
                neg.max((c.sum() - 1.0).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn user_index(&self, user: UserId) -> Result<usize> {
        self.user_ids
            .iter()
            .position(|u| *u == user)
            .ok_or(Error::UnknownUser(user))
    }

    pub fn predict_column(&self, index: usize) -> Result<SimplexVector> {
        let column = &self.dictionary * self.loadings.column(index);
        SimplexVector::new(column.iter().map(|x| x.max(0.0)).collect())
    }
}

/// `D Λ_u` clipped at zero and renormalized.
pub fn predict_user(model: &FactorModel, user: UserId) -> Result<SimplexVector> {
    model.predict_column(model.user_index(user)?)
}

/// `sum_u W_gamma(p_u, prediction_u)` evaluated by Sinkhorn.
pub fn model_objective(
    model: &FactorModel,
    prefs: &[SimplexVector],
    kernel: &GibbsKernel,
    opts: SinkhornOptions,
) -> Result<f64> {
    let mut total = 0.0;
    for (u, p) in prefs.iter().enumerate() {
        let q = model.predict_column(u)?;
        total += sinkhorn_with_kernel(p, &q, kernel, opts)?.regularized_value;
    }
    Ok(total)
}

/// Fits `D Λ` to the users' preferences over the interacted catalog.
///
/// Returns the model with the lowest objective seen; its trace records every
/// outer iteration.
pub fn train_wcf(
    prefs: &[SimplexVector],
    costs: &CostMatrix,
    k: usize,
    gamma: f64,
    opts: &TrainOptions,
) -> Result<FactorModel> {
    if prefs.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty user set".into()));
    }
    let (s, m) = (costs.ncols(), prefs.len());
    let kernel = GibbsKernel::from_cost(costs, gamma)?;
    let mut model = init_factors(s, m, k, opts.seed)?;
    model.gamma = gamma;
    model.item_ids = costs.col_ids().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed_0f4e_1417);

    let mut lambda_duals: Option<DMatrix<f64>> = None;
    let mut d_duals: Option<DMatrix<f64>> = None;
    let mut trace = Vec::new();
    let mut best: Option<(f64, DMatrix<f64>, DMatrix<f64>)> = None;

    for outer in 0..opts.max_outer {
        let mut attempts = 0;
        let (loadings, lstate) = loop {
            match lambda_step(&model.dictionary, prefs, &kernel, &opts.dual, lambda_duals.as_ref()) {
                Err(Error::RankDeficient { ratio, .. }) if attempts < opts.max_reinit => {
                    warn!("outer {outer}: dictionary rank deficient (ratio {ratio:e}), reinitializing");
                    model.dictionary = random_dictionary(s, k, &mut rng);
                    lambda_duals = None;
                    attempts += 1;
                }
                other => break other?,
            }
        };
        model.loadings = loadings;
        lambda_duals = Some(lstate.duals);

        let mut attempts = 0;
        let (dictionary, dstate) = loop {
            match d_step(&model.loadings, prefs, &kernel, &opts.dual, d_duals.as_ref()) {
                Err(Error::RankDeficient { ratio, .. }) if attempts < opts.max_reinit => {
                    warn!("outer {outer}: loadings rank deficient (ratio {ratio:e}), reinitializing");
                    model.loadings = DMatrix::from_fn(k, m, |_, _| rng.gen::<f64>());
                    d_duals = None;
                    attempts += 1;
                }
                other => break other?,
            }
        };
        model.dictionary = dictionary;
        d_duals = Some(dstate.duals);

        let objective = dstate.objective;
        debug!(
            "outer {outer}: objective {objective:.10e} (lambda-step {:.10e}, {} + {} inner iterations, residual {:e})",
            lstate.objective, lstate.iterations, dstate.iterations, dstate.residual
        );
        let previous = trace.last().copied();
        trace.push(objective);
        if best.as_ref().is_none_or(|(b, _, _)| objective < *b) {
            best = Some((objective, model.dictionary.clone(), model.loadings.clone()));
        }
        if let Some(prev) = previous {
            let change = (prev - objective).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if change < opts.tol {
                break;
            }
        }
    }

    if let Some((_, d, l)) = best {
        model.dictionary = d;
        model.loadings = l;
    }
    model.objective_trace = trace;
    Ok(model)
}
