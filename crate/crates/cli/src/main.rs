use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

mod commands;
mod report;

#[derive(Parser)]
#[command(name = "geomguard", version, about = "Density/coverage monitoring of query batches against a k-NN manifold")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "GEOMGUARD_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a manifold index over a reference set and write it to disk.
    Index(IndexArgs),
    /// Density and coverage of a query batch.
    Metrics(MetricsArgs),
    /// Sub-batch quantile bands and a flag verdict for a query batch.
    Monitor(MonitorArgs),
    /// Metrics for benign batches with a growing share of adversarial rows.
    Admixture(AdmixtureArgs),
    /// Generate synthetic data, train a classifier and attack it.
    Attack(AttackArgs),
    /// Time the accelerated path against the naive pairwise loops.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Auto,
    KdTree,
    Blocked,
}

impl From<Strategy> for geomguard::SearchStrategy {
    fn from(s: Strategy) -> Self {
        match s {
            Strategy::Auto => geomguard::SearchStrategy::Auto,
            Strategy::KdTree => geomguard::SearchStrategy::KdTree,
            Strategy::Blocked => geomguard::SearchStrategy::Blocked,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct IndexArgs {
    /// Reference point set (.pset or .csv).
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Output index file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    pub strategy: Strategy,
}

#[derive(Debug, Args, Serialize)]
pub struct MetricsArgs {
    /// Prebuilt index file.
    #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
    pub index: Option<PathBuf>,
    /// Build the index on the fly from this reference set.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Neighbour count when building from --reference.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub query: PathBuf,
    /// Also report precision and recall.
    #[arg(long)]
    pub with_pr: bool,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Iqr,
    QuantileRange,
}

#[derive(Debug, Args, Serialize)]
pub struct MonitorArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    /// Benign hold-out set the bands are computed from (defaults to the query itself).
    #[arg(long)]
    pub holdout: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub sub_batch: usize,
    #[arg(long, value_enum, default_value_t = PolicyName::Iqr)]
    pub policy: PolicyName,
    #[arg(long, default_value_t = 1.5)]
    pub iqr_multiplier: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 1 when any metric is flagged.
    #[arg(long)]
    pub fail_on_flag: bool,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Args, Serialize)]
pub struct AdmixtureArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub benign: PathBuf,
    #[arg(long)]
    pub adversarial: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    pub strategy: Strategy,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Dataset {
    Blobs,
}

#[derive(Debug, Clone, Copy, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    Fgsm,
    Boundary,
}

#[derive(Debug, Args, Serialize)]
pub struct AttackArgs {
    /// Load the classifier from this JSON file instead of training one.
    #[arg(long, conflicts_with = "model_out")]
    pub model_in: Option<PathBuf>,
    /// Write the trained classifier to this JSON file.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Dataset::Blobs)]
    pub dataset: Dataset,
    /// Total number of generated samples.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    /// Minimum distance between blob centers, in blob standard deviations.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f32,
    /// Share of samples held out as the validation set.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    /// Hidden layer width; 0 trains logistic regression.
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    #[arg(long, value_enum, default_value_t = AttackKind::Fgsm)]
    pub attack: AttackKind,
    /// start:stop:step, inclusive of both ends.
    #[arg(long, default_value = "0:1:0.05")]
    pub epsilon_grid: String,
    /// Sub-batch size for quantile bands; 0 disables them.
    #[arg(long, default_value_t = 100)]
    pub sub_batch: usize,
    /// Number of validation samples attacked by the boundary attack.
    #[arg(long, default_value_t = 100)]
    pub boundary_samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    /// Boundary-attack step length (defaults to 1% of the data diameter).
    #[arg(long)]
    pub step_scale: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for point sets and the report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    /// Reference set sizes.
    #[arg(long, value_delimiter = ',', default_value = "1000,5000")]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "16,128")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Query size as a fraction of the reference size.
    #[arg(long, default_value_t = 0.1)]
    pub query_fraction: f64,
    #[arg(long, value_enum, default_value_t = Strategy::Auto)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
}

/// Command-line misuse detected after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Returned by `monitor --fail-on-flag` after the report was printed.
pub struct Flagged;

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<std::io::Error>() || cause.is::<serde_json::Error>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<geomguard::Error>() {
            return match e {
                geomguard::Error::Io { .. } | geomguard::Error::Format(_) => 2,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match &cli.command {
        Command::Index(a) => commands::index(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::Monitor(a) => commands::monitor(a),
        Command::Admixture(a) => commands::admixture(a),
        Command::Attack(a) => commands::attack(a),
        Command::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(Flagged)) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
