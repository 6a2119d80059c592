//! The four pipeline stages. Everything lives under one experiment
//! directory:
//!
//! ```text
//! prepared/{interactions.tsv, genome.csv, stats.json}
//! splits/<ratio>/fold-<f>.json
//! runs/<ratio>/<algorithm>/{config.json, per_user.tsv, folds.tsv, summary.json}
//! runs/<ratio>/<algorithm>/fold-<f>/{predictions.tsv, model/}
//! summary.tsv, summary.json
//! ```
//!
//! Ratio directories use `-` in place of `:` (`3-1`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::Serialize;
use wcf_core::data::{
    binarize, cold_start_split, dataset_stats, filter_catalog, load_genome, load_interactions, write_genome,
    write_interactions, ColdStartSplit, GenomeTable, InteractionFormat, InteractionTable, SplitManifest, SplitRatio,
};
use wcf_core::experiment::{predict_wcf, predict_wf, FoldProblem, Predictions};
use wcf_core::metrics::{evaluate_run, fold_summary_record, per_user_records, EvaluationReport, FOLD_SUMMARY_HEADER, PER_USER_HEADER};
use wcf_core::wcf::{save_model, TrainOptions};
use wcf_core::wfilter::RankedList;
use wcf_core::{Error, Result};

const PREDICTIONS_HEADER: &str = "user\trank\titem\tscore";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io(parent))?;
    }
    fs::write(path, contents).map_err(io(path))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    write(path, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn reset_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(io(dir))?;
    }
    fs::create_dir_all(dir).map_err(io(dir))
}

fn ratio_dir(ratio: SplitRatio) -> String {
    ratio.to_string().replace(':', "-")
}

fn prepared_dir(out: &Path) -> PathBuf {
    out.join("prepared")
}

fn splits_dir(out: &Path, ratio: SplitRatio) -> PathBuf {
    out.join("splits").join(ratio_dir(ratio))
}

fn run_dir(out: &Path, ratio: SplitRatio, algorithm: &str) -> PathBuf {
    out.join("runs").join(ratio_dir(ratio)).join(algorithm)
}

fn fold_name(fold: usize) -> String {
    format!("fold-{fold}")
}

/// Sorted `(index, path)` of the entries named `fold-<index><suffix>`.
fn fold_entries(dir: &Path, suffix: &str) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(index) = name.strip_prefix("fold-").and_then(|s| s.strip_suffix(suffix)) {
            if let Ok(index) = index.parse() {
                out.push((index, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

fn load_prepared(out: &Path) -> Result<(InteractionTable, GenomeTable)> {
    let dir = prepared_dir(out);
    let (table, _) = load_interactions(&dir.join("interactions.tsv"), InteractionFormat::Tab)?;
    Ok((table, load_genome(&dir.join("genome.csv"))?))
}

fn load_manifests(out: &Path, ratio: SplitRatio) -> Result<Vec<SplitManifest>> {
    let dir = splits_dir(out, ratio);
    let entries = fold_entries(&dir, ".json")?;
    if entries.is_empty() {
        return Err(Error::Data(format!("no split manifests in {}; run `wcf split` first", dir.display())));
    }
    entries.iter().map(|(_, path)| read_json(path)).collect()
}

pub fn prepare(ratings: &Path, genome: &Path, format: InteractionFormat, threshold: f64, out: &Path) -> Result<()> {
    let (table, report) = load_interactions(ratings, format)?;
    info!(
        "read {} lines from {} ({} malformed, {} duplicates)",
        report.lines,
        ratings.display(),
        report.malformed,
        report.duplicates
    );
    let genome = load_genome(genome)?;
    let (table, genome) = filter_catalog(&binarize(&table, threshold), &genome)?;
    let stats = dataset_stats(&table);
    let dir = prepared_dir(out);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    write_interactions(&table, &dir.join("interactions.tsv"))?;
    write_genome(&genome, &dir.join("genome.csv"))?;
    write_json(&dir.join("stats.json"), &stats)?;
    info!(
        "{} users, {} items, {} interactions (density {:.4})",
        stats.users, stats.items, stats.interactions, stats.density
    );
    Ok(())
}

pub fn split(ratio: SplitRatio, folds: Option<usize>, seed: u64, out: &Path) -> Result<()> {
    let (table, _) = load_prepared(out)?;
    let splits = cold_start_split(&table, ratio, folds.unwrap_or(ratio.folds()), seed)?;
    let dir = splits_dir(out, ratio);
    reset_dir(&dir)?;
    for split in &splits {
        write_json(&dir.join(format!("{}.json", fold_name(split.fold_index))), &split.manifest())?;
        info!(
            "fold {}: {} interacted / {} cold items, {} train / {} test interactions",
            split.fold_index,
            split.interacted_items.len(),
            split.cold_items.len(),
            split.train.len(),
            split.test.len()
        );
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub algorithm: &'static str,
    pub ratio: SplitRatio,
    pub gamma: f64,
    pub latent_dim: usize,
    pub tol: f64,
    pub max_outer: usize,
    pub seed: u64,
}

fn format_predictions(predictions: &Predictions) -> String {
    let mut text = format!("{PREDICTIONS_HEADER}\n");
    for (user, list) in predictions {
        for (rank, (item, score)) in list.items.iter().zip(&list.scores).enumerate() {
            writeln!(text, "{user}\t{}\t{item}\t{score:e}", rank + 1).expect("write to string");
        }
    }
    text
}

fn parse_predictions(path: &Path) -> Result<Predictions> {
    let text = fs::read_to_string(path).map_err(io(path))?;
    let bad = |line: usize, why: &str| Error::Data(format!("{}:{line}: {why}", path.display()));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == PREDICTIONS_HEADER => {}
        _ => return Err(bad(1, "missing predictions header")),
    }
    let mut out: Predictions = BTreeMap::new();
    for (i, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        let [user, rank, item, score] = fields[..] else {
            return Err(bad(i + 1, "expected 4 tab-separated fields"));
        };
        let parsed = (user.parse::<u64>(), rank.parse::<usize>(), item.parse::<u64>(), score.parse::<f64>());
        let (Ok(user), Ok(rank), Ok(item), Ok(score)) = parsed else {
            return Err(bad(i + 1, "unparsable field"));
        };
        let list = out.entry(user).or_insert_with(|| RankedList { items: Vec::new(), scores: Vec::new() });
        if rank != list.items.len() + 1 {
            return Err(bad(i + 1, "ranks must be consecutive per user"));
        }
        list.items.push(item);
        list.scores.push(score);
    }
    Ok(out)
}

pub fn train(config: &TrainConfig, out: &Path) -> Result<()> {
    let manifests = load_manifests(out, config.ratio)?;
    let (table, genome) = load_prepared(out)?;
    let dir = run_dir(out, config.ratio, config.algorithm);
    reset_dir(&dir)?;
    write_json(&dir.join("config.json"), config)?;
    let opts = TrainOptions {
        tol: config.tol,
        max_outer: config.max_outer,
        seed: config.seed,
        ..TrainOptions::default()
    };
    for manifest in &manifests {
        let split = ColdStartSplit::from_manifest(manifest, &table)?;
        let problem = FoldProblem::new(&split, &genome)?;
        let fold_dir = dir.join(fold_name(split.fold_index));
        let predictions = if config.algorithm == "wcf" {
            let (model, predictions) = predict_wcf(&problem, config.latent_dim, config.gamma, &opts)?;
            info!(
                "fold {}: {} outer iterations, objective trace {:?}",
                split.fold_index,
                model.objective_trace.len(),
                model.objective_trace
            );
            save_model(&model, &fold_dir.join("model"))?;
            predictions
        } else {
            predict_wf(&problem, config.gamma)?
        };
        write(&fold_dir.join("predictions.tsv"), &format_predictions(&predictions))?;
        info!("fold {}: ranked {} cold items for {} users", split.fold_index, problem.cold_items().len(), predictions.len());
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    ratio: SplitRatio,
    algorithm: String,
    scope: usize,
    folds: usize,
    map: f64,
    ndcg: f64,
    recall: f64,
    per_fold: Vec<FoldSummary>,
}

#[derive(Debug, Clone, Serialize)]
struct FoldSummary {
    fold: usize,
    users: usize,
    excluded_users: usize,
    map: f64,
    ndcg: f64,
    recall: f64,
}

fn subdirs(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let entry = entry.map_err(io(dir))?;
        if entry.path().is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

fn evaluate_run_dir(
    out: &Path,
    ratio: SplitRatio,
    algorithm: &str,
    dir: &Path,
    table: &InteractionTable,
    scope: usize,
) -> Result<Option<RunSummary>> {
    let folds = fold_entries(dir, "")?;
    if folds.is_empty() {
        warn!("{} holds no fold predictions, skipped", dir.display());
        return Ok(None);
    }
    let mut reports: Vec<EvaluationReport> = Vec::new();
    for manifest in load_manifests(out, ratio)? {
        let path = dir.join(fold_name(manifest.fold)).join("predictions.tsv");
        if !path.is_file() {
            return Err(Error::Data(format!("missing predictions for fold {}: {}", manifest.fold, path.display())));
        }
        let split = ColdStartSplit::from_manifest(&manifest, table)?;
        reports.push(evaluate_run(&parse_predictions(&path)?, &split.test, scope, manifest.fold)?);
    }
    let mut per_user = format!("{PER_USER_HEADER}\n");
    let mut per_fold = format!("{FOLD_SUMMARY_HEADER}\n");
    for report in &reports {
        per_user.push_str(&per_user_records(report));
        per_fold.push_str(&fold_summary_record(report));
    }
    write(&dir.join("per_user.tsv"), &per_user)?;
    write(&dir.join("folds.tsv"), &per_fold)?;
    let mean = |f: fn(&EvaluationReport) -> f64| reports.iter().map(f).sum::<f64>() / reports.len() as f64;
    let summary = RunSummary {
        ratio,
        algorithm: algorithm.to_string(),
        scope,
        folds: reports.len(),
        map: mean(|r| r.map),
        ndcg: mean(|r| r.mean_ndcg),
        recall: mean(|r| r.mean_recall),
        per_fold: reports
            .iter()
            .map(|r| FoldSummary {
                fold: r.fold,
                users: r.per_user.len(),
                excluded_users: r.excluded_users,
                map: r.map,
                ndcg: r.mean_ndcg,
                recall: r.mean_recall,
            })
            .collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(Some(summary))
}

pub fn evaluate(scope: usize, out: &Path) -> Result<()> {
    let (table, _) = load_prepared(out)?;
    let runs_root = out.join("runs");
    let mut summaries = Vec::new();
    for (ratio_name, ratio_path) in subdirs(&runs_root)? {
        let ratio: SplitRatio = match ratio_name.replace('-', ":").parse() {
            Ok(r) => r,
            Err(_) => {
                warn!("ignoring unexpected directory {}", ratio_path.display());
                continue;
            }
        };
        for (algorithm, dir) in subdirs(&ratio_path)? {
            if let Some(summary) = evaluate_run_dir(out, ratio, &algorithm, &dir, &table, scope)? {
                summaries.push(summary);
            }
        }
    }
    if summaries.is_empty() {
        return Err(Error::Data(format!("no predictions found under {}; run `wcf train` first", runs_root.display())));
    }
    let mut text = format!("ratio\talgorithm\tfolds\tmap\tndcg@{scope}\trecall@{scope}\n");
    for s in &summaries {
        writeln!(text, "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}", s.ratio, s.algorithm, s.folds, s.map, s.ndcg, s.recall)
            .expect("write to string");
    }
    write(&out.join("summary.tsv"), &text)?;
    write_json(&out.join("summary.json"), &summaries)?;
    print!("{text}");
    Ok(())
}
