//! `wcf`: prepare data, build cold-start splits, train Wasserstein filtering
//! or Wasserstein collaborative filtering, and evaluate the rankings.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wcf_core::data::{InteractionFormat, SplitRatio};

/// Environment variable consulted when `--out` is not given.
pub const OUT_DIR_ENV: &str = "WCF_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "wcf", version, about = "Wasserstein cold-start recommendation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Binarize ratings, drop items without a genome, write the prepared dataset.
    Prepare(PrepareArgs),
    /// Cut the item catalog into interacted/cold folds.
    Split(SplitArgs),
    /// Rank cold items for every training user, fold by fold.
    Train(TrainArgs),
    /// Score every trained run and write the comparison tables.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct OutArg {
    /// Experiment directory.
    #[arg(long, env = OUT_DIR_ENV)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    ratings: PathBuf,
    /// Tag-genome scores CSV (movieId,tagId,relevance).
    #[arg(long)]
    genome: PathBuf,
    /// `tab` (user item rating timestamp) or `double-colon` (user::item::rating::timestamp).
    #[arg(long, default_value = "tab")]
    format: InteractionFormat,
    /// Ratings at or above this become positive interactions.
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long, default_value = "3:1")]
    ratio: SplitRatio,
    /// Number of folds to materialize (default: all of them).
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    Wf,
    Wcf,
}

impl Algorithm {
    fn name(self) -> &'static str {
        match self {
            Algorithm::Wf => "wf",
            Algorithm::Wcf => "wcf",
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    #[arg(long, default_value = "3:1")]
    ratio: SplitRatio,
    /// Entropic regularization strength.
    #[arg(long, default_value_t = wcf_core::DEFAULT_GAMMA, value_parser = positive_f64)]
    gamma: f64,
    /// Latent dimension of the factorization (wcf only).
    #[arg(long, default_value_t = wcf_core::DEFAULT_LATENT_DIM, value_parser = at_least_one)]
    latent_dim: usize,
    /// Relative objective change that stops training (wcf only).
    #[arg(long, default_value_t = 1e-5, value_parser = positive_f64)]
    tol: f64,
    #[arg(long, default_value_t = 50, value_parser = at_least_one)]
    max_outer: usize,
    /// Seed of the factor initialization (wcf only).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Ranking cutoff R for NDCG@R and Recall@R.
    #[arg(long, default_value_t = wcf_core::DEFAULT_SCOPE, value_parser = at_least_one)]
    scope: usize,
    #[command(flatten)]
    out: OutArg,
}

fn positive_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a finite number > 0, got {s}"))
    }
}

fn at_least_one(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        Ok(_) => Err("must be at least 1".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn exit_code(err: &wcf_core::Error) -> u8 {
    if err.is_solver_failure() {
        3
    } else if matches!(err, wcf_core::Error::InvalidArgument(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Prepare(a) => commands::prepare(&a.ratings, &a.genome, a.format, a.threshold, &a.out.out),
        Command::Split(a) => commands::split(a.ratio, a.folds, a.seed, &a.out.out),
        Command::Train(a) => commands::train(
            &commands::TrainConfig {
                algorithm: a.algorithm.name(),
                ratio: a.ratio,
                gamma: a.gamma,
                latent_dim: a.latent_dim,
                tol: a.tol,
                max_outer: a.max_outer,
                seed: a.seed,
            },
            &a.out.out,
        ),
        Command::Evaluate(a) => commands::evaluate(a.scope, &a.out.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
