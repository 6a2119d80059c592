use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Read;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::ItemId;

/// Dense tag-relevance vectors per item, over a shared ordered tag list.
#[derive(Debug, Clone, PartialEq)]
pub struct GenomeTable {
    tag_ids: Vec<u64>,
    relevance: BTreeMap<ItemId, Vec<f64>>,
}

impl GenomeTable {
    pub fn new(tag_ids: Vec<u64>, relevance: BTreeMap<ItemId, Vec<f64>>) -> Result<Self> {
        for (item, v) in &relevance {
            if v.len() != tag_ids.len() {
                return Err(Error::Data(format!(
                    "genome of item {item} has {} tags, expected {}",
                    v.len(),
                    tag_ids.len()
                )));
            }
            if let Some(x) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::Data(format!("genome of item {item}: relevance {x} outside [0, 1]")));
            }
        }
        Ok(Self { tag_ids, relevance })
    }

    pub fn tag_ids(&self) -> &[u64] {
        &self.tag_ids
    }

    pub fn num_tags(&self) -> usize {
        self.tag_ids.len()
    }

    pub fn len(&self) -> usize {
        self.relevance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relevance.is_empty()
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.relevance.contains_key(&item)
    }

    pub fn get(&self, item: ItemId) -> Option<&[f64]> {
        self.relevance.get(&item).map(Vec::as_slice)
    }

    /// Sorted item ids.
    pub fn item_ids(&self) -> Vec<ItemId> {
        self.relevance.keys().copied().collect()
    }

    pub fn restrict(&self, items: &BTreeSet<ItemId>) -> Self {
        Self {
            tag_ids: self.tag_ids.clone(),
            relevance: self
                .relevance
                .iter()
                .filter(|(k, _)| items.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }
}

/// Reads the long format (`movieId,tagId,relevance` with a header) and pivots
/// it to dense vectors. Pairs missing for a present movie default to 0.
pub fn parse_genome(reader: impl Read) -> Result<GenomeTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Data(format!("genome header: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Data(format!("genome header lacks column {name:?}")))
    };
    let (movie_col, tag_col, rel_col) = (column("movieId")?, column("tagId")?, column("relevance")?);

    let mut triples: BTreeMap<ItemId, BTreeMap<u64, f64>> = BTreeMap::new();
    let mut tags = BTreeSet::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Data(format!("genome row {}: {e}", row + 2)))?;
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &str| Error::Data(format!("genome row {}: bad {what}", row + 2));
        let movie: ItemId = field(movie_col).parse().map_err(|_| bad("movieId"))?;
        let tag: u64 = field(tag_col).parse().map_err(|_| bad("tagId"))?;
        let relevance: f64 = field(rel_col).parse().map_err(|_| bad("relevance"))?;
        tags.insert(tag);
        triples.entry(movie).or_default().insert(tag, relevance);
    }
    let tag_ids: Vec<u64> = tags.into_iter().collect();
    let mut partial = 0usize;
    let relevance = triples
        .into_iter()
        .map(|(movie, scores)| {
            if scores.len() < tag_ids.len() {
                partial += 1;
            }
            let v = tag_ids.iter().map(|t| scores.get(t).copied().unwrap_or(0.0)).collect();
            (movie, v)
        })
        .collect();
    if partial > 0 {
        warn!("{partial} movies have partial genomes; missing tags set to relevance 0");
    }
    GenomeTable::new(tag_ids, relevance)
}

pub fn load_genome(path: &Path) -> Result<GenomeTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_genome(std::io::BufReader::new(file)).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn write_genome(genome: &GenomeTable, path: &Path) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    wtr.write_record(["movieId", "tagId", "relevance"]).map_err(fail)?;
    for (movie, v) in &genome.relevance {
        for (tag, x) in genome.tag_ids.iter().zip(v) {
            wtr.write_record([movie.to_string(), tag.to_string(), x.to_string()])
                .map_err(fail)?;
        }
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}
