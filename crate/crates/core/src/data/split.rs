//! Item-level cold-start splits.
//!
//! Items are shuffled once per seed and cut into equal subsets. A 3:1 split
//! uses four subsets with one cold subset per fold, 1:1 uses two, and 1:3
//! uses four subsets with three cold subsets per fold.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::InteractionTable;
use crate::error::{Error, Result};
use crate::ItemId;

/// Ratio of interacted to cold items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitRatio {
    #[serde(rename = "3:1")]
    ThreeToOne,
    #[serde(rename = "1:1")]
    OneToOne,
    #[serde(rename = "1:3")]
    OneToThree,
}

impl SplitRatio {
    /// Number of equal item subsets.
    pub fn subsets(self) -> usize {
        match self {
            SplitRatio::ThreeToOne | SplitRatio::OneToThree => 4,
            SplitRatio::OneToOne => 2,
        }
    }

    /// Number of folds; every subset takes each role once.
    pub fn folds(self) -> usize {
        self.subsets()
    }

    /// How many folds each item spends on the cold side.
    pub fn cold_appearances(self) -> usize {
        match self {
            SplitRatio::ThreeToOne | SplitRatio::OneToOne => 1,
            SplitRatio::OneToThree => 3,
        }
    }

    fn is_cold(self, subset: usize, fold: usize) -> bool {
        match self {
            SplitRatio::ThreeToOne | SplitRatio::OneToOne => subset == fold,
            SplitRatio::OneToThree => subset != fold,
        }
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitRatio::ThreeToOne => "3:1",
            SplitRatio::OneToOne => "1:1",
            SplitRatio::OneToThree => "1:3",
        })
    }
}

impl FromStr for SplitRatio {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3:1" => Ok(Self::ThreeToOne),
            "1:1" => Ok(Self::OneToOne),
            "1:3" => Ok(Self::OneToThree),
            other => Err(Error::InvalidArgument(format!(
                "unknown ratio {other:?} (expected 3:1, 1:1 or 1:3)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColdStartSplit {
    /// Sorted interacted items.
    pub interacted_items: Vec<ItemId>,
    /// Sorted cold items.
    pub cold_items: Vec<ItemId>,
    /// Interactions on interacted items.
    pub train: InteractionTable,
    /// Interactions on cold items.
    pub test: InteractionTable,
    pub fold_index: usize,
    pub seed: u64,
    pub ratio: SplitRatio,
}

/// Everything needed to rebuild a split from the prepared interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub ratio: SplitRatio,
    pub seed: u64,
    pub fold: usize,
    pub interacted_items: Vec<ItemId>,
    pub cold_items: Vec<ItemId>,
}

impl ColdStartSplit {
    fn induce(
        table: &InteractionTable,
        interacted_items: Vec<ItemId>,
        cold_items: Vec<ItemId>,
        fold_index: usize,
        seed: u64,
        ratio: SplitRatio,
    ) -> Self {
        let cold: BTreeSet<ItemId> = cold_items.iter().copied().collect();
        let interacted: BTreeSet<ItemId> = interacted_items.iter().copied().collect();
        Self {
            train: table.filter(|r| interacted.contains(&r.item)),
            test: table.filter(|r| cold.contains(&r.item)),
            interacted_items,
            cold_items,
            fold_index,
            seed,
            ratio,
        }
    }

    pub fn manifest(&self) -> SplitManifest {
        SplitManifest {
            ratio: self.ratio,
            seed: self.seed,
            fold: self.fold_index,
            interacted_items: self.interacted_items.clone(),
            cold_items: self.cold_items.clone(),
        }
    }

    /// Rebuilds the split from a manifest; the item sets must partition the
    /// table's items.
    pub fn from_manifest(manifest: &SplitManifest, table: &InteractionTable) -> Result<Self> {
        let v: BTreeSet<ItemId> = manifest.interacted_items.iter().copied().collect();
        let c: BTreeSet<ItemId> = manifest.cold_items.iter().copied().collect();
        if v.len() != manifest.interacted_items.len() || c.len() != manifest.cold_items.len() {
            return Err(Error::Data("split manifest lists an item twice".into()));
        }
        if !v.is_disjoint(&c) {
            return Err(Error::Data("split manifest has items on both sides".into()));
        }
        let all: BTreeSet<ItemId> = table.items().into_iter().collect();
        let union: BTreeSet<ItemId> = v.union(&c).copied().collect();
        if union != all {
            return Err(Error::Data(
                "split manifest does not cover exactly the items of the interaction table".into(),
            ));
        }
        Ok(Self::induce(
            table,
            v.into_iter().collect(),
            c.into_iter().collect(),
            manifest.fold,
            manifest.seed,
            manifest.ratio,
        ))
    }
}

/// The first `folds` folds of an item-level split (all of them when `folds`
/// equals [`SplitRatio::folds`]).
pub fn cold_start_split(
    table: &InteractionTable,
    ratio: SplitRatio,
    folds: usize,
    seed: u64,
) -> Result<Vec<ColdStartSplit>> {
    if folds == 0 || folds > ratio.folds() {
        return Err(Error::InvalidArgument(format!(
            "ratio {ratio} has {} folds, {folds} requested",
            ratio.folds()
        )));
    }
    let mut items = table.items();
    let k = ratio.subsets();
    if items.len() < k {
        return Err(Error::Data(format!(
            "{} items cannot be cut into {k} subsets",
            items.len()
        )));
    }
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = items.len();
    let subset_of: Vec<usize> = (0..n).map(|pos| (0..k).find(|s| pos < (s + 1) * n / k).unwrap()).collect();

    Ok((0..folds)
        .map(|fold| {
            let mut interacted = Vec::new();
            let mut cold = Vec::new();
            for (pos, item) in items.iter().enumerate() {
                if ratio.is_cold(subset_of[pos], fold) {
                    cold.push(*item);
                } else {
                    interacted.push(*item);
                }
            }
            interacted.sort_unstable();
            cold.sort_unstable();
            ColdStartSplit::induce(table, interacted, cold, fold, seed, ratio)
        })
        .collect())
}
