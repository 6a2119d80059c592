//! Model directories: `dictionary.tsv`, `loadings.tsv` and `manifest.json`.
//!
//! Matrix entries are written with 17 significant digits, which round-trips
//! every `f64` exactly.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FactorModel;
use crate::error::{Error, Result};
use crate::{ItemId, UserId};

pub const DICTIONARY_FILE: &str = "dictionary.tsv";
pub const LOADINGS_FILE: &str = "loadings.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    gamma: f64,
    k: usize,
    seed: u64,
    item_ids: Vec<ItemId>,
    user_ids: Vec<UserId>,
    objective_trace: Vec<f64>,
}

pub(crate) fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    out
}

pub(crate) fn parse_matrix(text: &str, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
    let mut values = Vec::with_capacity(rows * cols);
    let mut seen_rows = 0;
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != cols {
            return Err(Error::Data(format!(
                "{what} line {}: expected {cols} columns, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        for f in fields {
            let v: f64 = f
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("{what} line {}: bad number {f:?}", lineno + 1)))?;
            values.push(v);
        }
        seen_rows += 1;
    }
    if seen_rows != rows {
        return Err(Error::Data(format!("{what}: expected {rows} rows, found {seen_rows}")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn save_model(model: &FactorModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        gamma: model.gamma,
        k: model.k,
        seed: model.seed,
        item_ids: model.item_ids.clone(),
        user_ids: model.user_ids.clone(),
        objective_trace: model.objective_trace.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let write = |name: &str, contents: String| {
        let path = dir.join(name);
        fs::write(&path, contents).map_err(|e| Error::io(path, e))
    };
    write(DICTIONARY_FILE, format_matrix(&model.dictionary))?;
    write(LOADINGS_FILE, format_matrix(&model.loadings))?;
    write(MANIFEST_FILE, json + "\n")
}

pub fn load_model(dir: &Path) -> Result<FactorModel> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| Error::io(path, e))
    };
    let manifest: Manifest = serde_json::from_str(&read(MANIFEST_FILE)?)
        .map_err(|e| Error::Data(format!("{MANIFEST_FILE}: {e}")))?;
    let s = manifest.item_ids.len();
    let m = manifest.user_ids.len();
    let dictionary = parse_matrix(&read(DICTIONARY_FILE)?, s, manifest.k, DICTIONARY_FILE)?;
    let loadings = parse_matrix(&read(LOADINGS_FILE)?, manifest.k, m, LOADINGS_FILE)?;
    Ok(FactorModel {
        dictionary,
        loadings,
        gamma: manifest.gamma,
        k: manifest.k,
        seed: manifest.seed,
        item_ids: manifest.item_ids,
        user_ids: manifest.user_ids,
        objective_trace: manifest.objective_trace,
    })
}
