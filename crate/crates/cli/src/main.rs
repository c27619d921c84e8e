//! `imapce` command-line front end.
//!
//! Every setting can come from a flat `key=value` file given with `--config`;
//! flags on the command line win. The settings actually used are echoed to
//! `<out>/config.resolved`.

mod commands;
mod config;
mod error;
mod svg;

use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "imapce", version, about = "Informative projections and cluster exploration with prior knowledge")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the ten-dimensional synthetic dataset.
    Synth(SynthArgs),
    /// Compute a single IMAPCE or cPCA embedding.
    Embed(EmbedArgs),
    /// Run iterative cluster exploration.
    Explore(ExploreArgs),
    /// Score an embedding or a clustering.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// key=value file with default settings
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// key=value file with default settings
    #[arg(long)]
    config: Option<String>,
    /// CSV file, or directory with an IDX image/label pair
    #[arg(long)]
    data: Option<String>,
    /// Comma-separated label columns of the CSV
    #[arg(long)]
    labels: Option<String>,
    /// Divide every column by its standard deviation
    #[arg(long)]
    standardize: bool,
    /// Project onto this many leading singular directions first
    #[arg(long)]
    svd_dims: Option<usize>,
    /// none | attributes | samples | subset
    #[arg(long)]
    prior_type: Option<String>,
    /// Attribute prior: column names or indices (ranges like 0-3 allowed)
    #[arg(long)]
    prior_cols: Option<String>,
    /// Sample prior: CSV file or IDX directory with the same columns
    #[arg(long)]
    prior_file: Option<String>,
    /// Subset prior: row indices (ranges like 0-99 allowed)
    #[arg(long)]
    prior_rows: Option<String>,
    /// Weight of the prior scatter (cPCA contrast strength)
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight of the kurtosis penalty
    #[arg(long)]
    mu: Option<f64>,
    /// Set mu to 10^EXP times the cPCA reconstruction error (EXP defaults to -2)
    #[arg(long, value_name = "EXP", num_args = 0..=1, require_equals = true, default_missing_value = "-2", allow_negative_numbers = true)]
    auto_mu: Option<i32>,
    /// Embedding dimension
    #[arg(long)]
    k: Option<usize>,
    /// Minimum acceptable cluster size
    #[arg(long)]
    s: Option<usize>,
    /// Random Stiefel initialisations; the lowest cost wins
    #[arg(long)]
    restarts: Option<usize>,
    /// Seed for the solver, mixture model and sampling
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum solver iterations per restart
    #[arg(long)]
    max_iter: Option<usize>,
    /// Stop when the Riemannian gradient norm drops below this
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[command(flatten)]
    data: DataArgs,
    /// imapce | cpca
    #[arg(long)]
    method: Option<String>,
    /// cPCA: pick alpha as the medoid of the largest subspace group
    #[arg(long)]
    alpha_select: bool,
    /// cPCA alpha selection: number of subspace groups
    #[arg(long)]
    spectral_clusters: Option<usize>,
}

#[derive(Args, Debug)]
struct ExploreArgs {
    #[command(flatten)]
    data: DataArgs,
    /// imapce | cpca
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Mixture truncation level
    #[arg(long)]
    components: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// key=value file with default settings
    #[arg(long)]
    config: Option<String>,
    /// laplacian | jaccard | nmi | clf
    #[arg(long)]
    kind: Option<String>,
    /// CSV with coordinates and label columns
    #[arg(long)]
    data: Option<String>,
    /// Ground-truth label column (default: label)
    #[arg(long)]
    label_col: Option<String>,
    /// Cluster column for jaccard/nmi (-1 marks unassigned rows)
    #[arg(long)]
    pred_col: Option<String>,
    /// Coordinate columns (default: q1, q2, ...)
    #[arg(long)]
    coords: Option<String>,
    /// Neighbor sizes for the Laplacian sweep
    #[arg(long)]
    neighbors: Option<String>,
    /// Random train/test splits for clf
    #[arg(long)]
    splits: Option<usize>,
    /// Training fraction for clf splits
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.txt
    #[arg(long)]
    out: Option<String>,
}

fn run() -> Result<(), CliError> {
    let matches = match Cli::command().try_get_matches() {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => return Err(CliError::Usage(e.to_string().trim_start_matches("error: ").trim().to_string())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| CliError::Usage(e.to_string()))?;
    let (_, sub) = matches.subcommand().expect("subcommand is required");
    let cfg = RunConfig::from_matches(sub)?;
    match cli.command {
        Command::Synth(_) => commands::synth(&cfg),
        Command::Embed(_) => commands::embed(&cfg),
        Command::Explore(_) => commands::explore(&cfg),
        Command::Score(_) => commands::score(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
