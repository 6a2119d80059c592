//! Dataset ingestion and the cold-start experimental protocol.

mod cost;
mod genome;
mod interactions;
mod split;

use std::collections::{BTreeMap, BTreeSet};

pub use cost::{build_cost_matrix, cosine_costs};
pub use genome::{load_genome, parse_genome, write_genome, GenomeTable};
pub use interactions::{
    binarize, load_interactions, load_interactions_with_scale, parse_interactions, write_interactions,
    Interaction, InteractionFormat, InteractionTable, LoadReport, RatingScale,
};
pub use split::{cold_start_split, ColdStartSplit, SplitManifest, SplitRatio};

use crate::error::{Error, Result};
use crate::transport::SimplexVector;
use crate::wfilter::{estimate_preference, UserInteractions};
use crate::{ItemId, UserId};

/// Drops interactions on items without a genome vector, then users left with
/// no interactions, and restricts the genome to the surviving items.
pub fn filter_catalog(table: &InteractionTable, genome: &GenomeTable) -> Result<(InteractionTable, GenomeTable)> {
    // a user whose items all lack a genome simply has no records left, so
    // one pass reaches the fixed point
    let records: Vec<Interaction> = table.records.iter().filter(|r| genome.contains(r.item)).copied().collect();
    if records.is_empty() {
        return Err(Error::Data("no interactions left after filtering the catalog".into()));
    }
    let filtered = InteractionTable { records };
    let items: BTreeSet<ItemId> = filtered.items().into_iter().collect();
    Ok((filtered, genome.restrict(&items)))
}

/// Per-user preferences over `items` estimated from `train`. Users without
/// any training interaction are skipped.
pub fn training_preferences(train: &InteractionTable, items: &[ItemId]) -> Result<Vec<(UserId, SimplexVector)>> {
    let position: BTreeMap<ItemId, usize> = items.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut per_user: BTreeMap<UserId, Vec<(usize, f64)>> = BTreeMap::new();
    for r in &train.records {
        let Some(&i) = position.get(&r.item) else {
            return Err(Error::Data(format!("training item {} is not in the interacted catalog", r.item)));
        };
        per_user.entry(r.user).or_default().push((i, r.rating));
    }
    let mut out = Vec::with_capacity(per_user.len());
    for (user, counts) in per_user {
        let interactions = UserInteractions::new(user, counts)?;
        if interactions.is_empty() {
            continue;
        }
        out.push((user, estimate_preference(&interactions, items.len())?));
    }
    Ok(out)
}

/// Summary comparable to a dataset statistics table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub density: f64,
}

pub fn dataset_stats(table: &InteractionTable) -> DatasetStats {
    let users = table.users().len();
    let items = table.items().len();
    let interactions = table.len();
    let density = if users * items == 0 {
        0.0
    } else {
        interactions as f64 / (users * items) as f64
    };
    DatasetStats {
        users,
        items,
        interactions,
        density,
    }
}
