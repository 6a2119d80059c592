//! One fold of the cold-start protocol: build the transport problem from a
//! split and a genome, then rank the cold items for every training user.

use std::collections::BTreeMap;

use crate::data::{build_cost_matrix, training_preferences, ColdStartSplit, GenomeTable};
use crate::error::Result;
use crate::transport::{CostMatrix, GibbsKernel, SimplexVector};
use crate::wcf::{predict_user, train_wcf, FactorModel, TrainOptions};
use crate::wfilter::{infer_cold_with_kernel, rank_items, RankedList};
use crate::{ItemId, UserId};

pub type Predictions = BTreeMap<UserId, RankedList>;

/// Costs between the interacted items (rows) and the cold items (columns),
/// plus every training user's preference over the interacted items.
#[derive(Debug, Clone)]
pub struct FoldProblem {
    pub costs: CostMatrix,
    pub users: Vec<UserId>,
    pub prefs: Vec<SimplexVector>,
}

impl FoldProblem {
    pub fn new(split: &ColdStartSplit, genome: &GenomeTable) -> Result<Self> {
        let costs = build_cost_matrix(genome, &split.interacted_items, &split.cold_items)?;
        let (users, prefs) = training_preferences(&split.train, &split.interacted_items)?.into_iter().unzip();
        Ok(Self { costs, users, prefs })
    }

    pub fn cold_items(&self) -> &[ItemId] {
        self.costs.col_ids()
    }
}

pub fn predict_wf(problem: &FoldProblem, gamma: f64) -> Result<Predictions> {
    let kernel = GibbsKernel::from_cost(&problem.costs, gamma)?;
    problem
        .users
        .iter()
        .zip(&problem.prefs)
        .map(|(user, p)| {
            let q = infer_cold_with_kernel(p, &kernel)?;
            Ok((*user, rank_items(&q, problem.cold_items())?))
        })
        .collect()
}

pub fn predict_wcf(problem: &FoldProblem, k: usize, gamma: f64, opts: &TrainOptions) -> Result<(FactorModel, Predictions)> {
    let model = train_wcf(&problem.prefs, &problem.costs, k, gamma, opts)?.with_user_ids(problem.users.clone())?;
    let predictions = problem
        .users
        .iter()
        .map(|user| Ok((*user, rank_items(&predict_user(&model, *user)?, problem.cold_items())?)))
        .collect::<Result<_>>()?;
    Ok((model, predictions))
}
