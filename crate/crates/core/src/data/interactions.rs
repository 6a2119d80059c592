use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use log::warn;

use crate::error::{Error, Result};
use crate::{ItemId, UserId};

/// Above this fraction of malformed lines a file is rejected outright.
pub const MAX_MALFORMED_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    /// Seconds since the epoch.
    pub timestamp: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionTable {
    pub records: Vec<Interaction>,
}

impl InteractionTable {
    /// Keeps one record per (user, item): the one with the latest timestamp,
    /// the later record on ties. Output is sorted by (user, item).
    pub fn from_records(records: Vec<Interaction>) -> Self {
        let mut latest: HashMap<(UserId, ItemId), Interaction> = HashMap::with_capacity(records.len());
        for r in records {
            match latest.get(&(r.user, r.item)) {
                Some(prev) if prev.timestamp > r.timestamp => {}
                _ => {
                    latest.insert((r.user, r.item), r);
                }
            }
        }
        let mut records: Vec<Interaction> = latest.into_values().collect();
        records.sort_by_key(|r| (r.user, r.item));
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted distinct users.
    pub fn users(&self) -> Vec<UserId> {
        let mut u: Vec<UserId> = self.records.iter().map(|r| r.user).collect();
        u.sort_unstable();
        u.dedup();
        u
    }

    /// Sorted distinct items.
    pub fn items(&self) -> Vec<ItemId> {
        let mut i: Vec<ItemId> = self.records.iter().map(|r| r.item).collect();
        i.sort_unstable();
        i.dedup();
        i
    }

    pub fn filter(&self, keep: impl Fn(&Interaction) -> bool) -> Self {
        Self {
            records: self.records.iter().filter(|r| keep(r)).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InteractionFormat {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` (MovieLens 100k `u.data`).
    Tab,
    /// `user::item::rating::timestamp` (MovieLens 1M/10M `ratings.dat`).
    DoubleColon,
}

impl InteractionFormat {
    fn separator(self) -> &'static str {
        match self {
            InteractionFormat::Tab => "\t",
            InteractionFormat::DoubleColon => "::",
        }
    }
}

impl FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tab" => Ok(Self::Tab),
            "double-colon" => Ok(Self::DoubleColon),
            other => Err(Error::InvalidArgument(format!(
                "unknown interaction format {other:?} (expected tab or double-colon)"
            ))),
        }
    }
}

/// Inclusive range of valid ratings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
}

impl Default for RatingScale {
    /// MovieLens: half stars from 0.5 to 5.
    fn default() -> Self {
        Self { min: 0.5, max: 5.0 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub lines: usize,
    pub malformed: usize,
    pub duplicates: usize,
}

fn parse_line(line: &str, format: InteractionFormat, scale: RatingScale) -> Option<Interaction> {
    let mut fields = line.split(format.separator());
    let user = fields.next()?.trim().parse().ok()?;
    let item = fields.next()?.trim().parse().ok()?;
    let rating: f64 = fields.next()?.trim().parse().ok()?;
    let timestamp = fields.next()?.trim().parse().ok()?;
    if fields.next().is_some() || !(rating >= scale.min && rating <= scale.max) {
        return None;
    }
    Some(Interaction {
        user,
        item,
        rating,
        timestamp,
    })
}

/// Parses interaction lines; blank lines are ignored, malformed ones skipped
/// and counted.
pub fn parse_interactions(
    reader: impl BufRead,
    format: InteractionFormat,
    scale: RatingScale,
) -> Result<(InteractionTable, LoadReport)> {
    let mut report = LoadReport::default();
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("line {}: {e}", lineno + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_line(line.trim_end_matches('\r'), format, scale) {
            Some(r) => records.push(r),
            None => {
                report.malformed += 1;
                warn!("skipping malformed interaction line {}: {line:?}", lineno + 1);
            }
        }
    }
    if report.lines > 0 && report.malformed as f64 > MAX_MALFORMED_FRACTION * report.lines as f64 {
        return Err(Error::Data(format!(
            "{} of {} lines are malformed (limit {:.0}%)",
            report.malformed,
            report.lines,
            MAX_MALFORMED_FRACTION * 100.0
        )));
    }
    let parsed = records.len();
    let table = InteractionTable::from_records(records);
    report.duplicates = parsed - table.len();
    Ok((table, report))
}

pub fn load_interactions(path: &Path, format: InteractionFormat) -> Result<(InteractionTable, LoadReport)> {
    load_interactions_with_scale(path, format, RatingScale::default())
}

pub fn load_interactions_with_scale(
    path: &Path,
    format: InteractionFormat,
    scale: RatingScale,
) -> Result<(InteractionTable, LoadReport)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_interactions(std::io::BufReader::new(file), format, scale)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// Writes the table in the tab-separated format.
pub fn write_interactions(table: &InteractionTable, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(table.len() * 24);
    for r in &table.records {
        writeln!(out, "{}\t{}\t{}\t{}", r.user, r.item, r.rating, r.timestamp).expect("write to string");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Keeps ratings `>= threshold` as implicit feedback of strength 1.
pub fn binarize(table: &InteractionTable, threshold: f64) -> InteractionTable {
    InteractionTable {
        records: table
            .records
            .iter()
            .filter(|r| r.rating >= threshold)
            .map(|r| Interaction { rating: 1.0, ..*r })
            .collect(),
    }
}
