//! Binary-relevance ranking metrics over a full ranking of the cold items.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use crate::data::InteractionTable;
use crate::error::{Error, Result};
use crate::wfilter::RankedList;
use crate::{ItemId, UserId};

fn require_positives(positives: &BTreeSet<ItemId>) -> Result<()> {
    if positives.is_empty() {
        return Err(Error::InvalidArgument("metric undefined for a user without held-out positives".into()));
    }
    Ok(())
}

/// Sum of precision at every hit, divided by `|I|`.
pub fn average_precision(ranking: &[ItemId], positives: &BTreeSet<ItemId>) -> Result<f64> {
    require_positives(positives)?;
    let mut hits = 0usize;
    let mut total = 0.0;
    for (r, item) in ranking.iter().enumerate() {
        if positives.contains(item) {
            hits += 1;
            total += hits as f64 / (r + 1) as f64;
        }
    }
    if hits != positives.len() {
        return Err(Error::InvalidArgument(format!(
            "{} held-out positives are missing from the ranking",
            positives.len() - hits
        )));
    }
    Ok(total / positives.len() as f64)
}

/// `DCG@R / IDCG@R` with gain 1 per hit and discount `log2(r + 1)`.
pub fn ndcg_at(ranking: &[ItemId], positives: &BTreeSet<ItemId>, scope: usize) -> Result<f64> {
    require_positives(positives)?;
    if scope == 0 {
        return Err(Error::InvalidArgument("scope R must be >= 1".into()));
    }
    let discount = |r: usize| 1.0 / ((r + 1) as f64).log2();
    let dcg: f64 = ranking
        .iter()
        .take(scope)
        .enumerate()
        .filter(|(_, item)| positives.contains(item))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=scope.min(positives.len())).map(discount).sum();
    Ok(dcg / ideal)
}

/// Hits in the top `R` divided by `|I|`.
pub fn recall_at(ranking: &[ItemId], positives: &BTreeSet<ItemId>, scope: usize) -> Result<f64> {
    require_positives(positives)?;
    let hits = ranking.iter().take(scope).filter(|i| positives.contains(i)).count();
    Ok(hits as f64 / positives.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserMetrics {
    pub ap: f64,
    pub ndcg: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub fold: usize,
    pub scope: usize,
    pub per_user: BTreeMap<UserId, UserMetrics>,
    pub map: f64,
    pub mean_ndcg: f64,
    pub mean_recall: f64,
    /// Users with predictions but no held-out positives, plus test users
    /// without predictions.
    pub excluded_users: usize,
}

/// Scores every predicted user against their held-out positives in `test`.
pub fn evaluate_run(
    predictions: &BTreeMap<UserId, RankedList>,
    test: &InteractionTable,
    scope: usize,
    fold: usize,
) -> Result<EvaluationReport> {
    let mut held_out: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for r in &test.records {
        if r.rating > 0.0 {
            held_out.entry(r.user).or_default().insert(r.item);
        }
    }
    let mut per_user = BTreeMap::new();
    let mut excluded = held_out.keys().filter(|u| !predictions.contains_key(u)).count();
    for (user, ranking) in predictions {
        let Some(positives) = held_out.get(user) else {
            excluded += 1;
            continue;
        };
        let metrics = UserMetrics {
            ap: average_precision(&ranking.items, positives)?,
            ndcg: ndcg_at(&ranking.items, positives, scope)?,
            recall: recall_at(&ranking.items, positives, scope)?,
        };
        per_user.insert(*user, metrics);
    }
    if per_user.is_empty() {
        return Err(Error::Data("no evaluable users (no predicted user has held-out positives)".into()));
    }
    let n = per_user.len() as f64;
    let mean = |f: fn(&UserMetrics) -> f64| per_user.values().map(f).sum::<f64>() / n;
    Ok(EvaluationReport {
        fold,
        scope,
        map: mean(|m| m.ap),
        mean_ndcg: mean(|m| m.ndcg),
        mean_recall: mean(|m| m.recall),
        per_user,
        excluded_users: excluded,
    })
}

/// Header for [`per_user_records`].
pub const PER_USER_HEADER: &str = "fold\tuser\tap\tndcg\trecall";
/// Header for [`fold_summary_record`].
pub const FOLD_SUMMARY_HEADER: &str = "fold\tscope\tusers\texcluded\tmap\tndcg\trecall";

/// One tab-separated line per user, in user order.
pub fn per_user_records(report: &EvaluationReport) -> String {
    let mut out = String::new();
    for (user, m) in &report.per_user {
        writeln!(out, "{}\t{user}\t{}\t{}\t{}", report.fold, m.ap, m.ndcg, m.recall).expect("write to string");
    }
    out
}

pub fn fold_summary_record(report: &EvaluationReport) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        report.fold,
        report.scope,
        report.per_user.len(),
        report.excluded_users,
        report.map,
        report.mean_ndcg,
        report.mean_recall
    )
}
