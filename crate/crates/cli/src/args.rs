//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "smdl", version, about = "Submodular mini-batch selection and training")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON config whose keys mirror the weight/selection/trainer field names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Worker threads for partition-parallel selection.
    #[arg(long, global = true, env = "SMDL_THREADS")]
    pub threads: Option<usize>,

    #[command(flatten)]
    pub overrides: Overrides,
}

/// Per-key config overrides, named after the config keys.
#[derive(Debug, Args, Default, Clone)]
pub struct Overrides {
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    #[arg(long, global = true)]
    pub lambda3: Option<f64>,
    #[arg(long, global = true)]
    pub lambda4: Option<f64>,
    #[arg(long, global = true)]
    pub metric: Option<String>,
    #[arg(long, global = true)]
    pub gaussian_sigma: Option<f64>,
    #[arg(long, global = true)]
    pub fm_mode: Option<String>,
    #[arg(long, global = true)]
    pub r_max: Option<f64>,
    #[arg(long, global = true)]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    pub partitions: Option<usize>,
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub refresh_rate: Option<usize>,
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    #[arg(long, global = true)]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    pub momentum: Option<f64>,
    #[arg(long, global = true)]
    pub weight_decay: Option<f64>,
    #[arg(long, global = true)]
    pub sampler: Option<String>,
    #[arg(long, global = true)]
    pub loss_based_exponent: Option<f64>,
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    #[arg(long, global = true)]
    pub epoch_without_replacement: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select one mini-batch from a dataset.
    Select(SelectArgs),
    /// Train the reference model with the configured sampler.
    Train(TrainArgs),
    /// Sweep a parameter grid, one training run per cell and seed.
    Ablate(AblateArgs),
    /// Time partitioned selection at several dataset sizes.
    Bench(BenchArgs),
    /// Compare maximizers against brute-force optima on seeded random instances.
    OracleCheck(OracleArgs),
    /// Generate a Gaussian-blob train/test dataset.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Directory holding `<prefix>_features`, `_probs`, `_labels.txt` (and optional `_fixed`).
    #[arg(long, conflicts_with_all = ["features", "probs", "labels"])]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    pub prefix: String,
    #[arg(long, requires_all = ["probs", "labels"])]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub probs: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub fixed_features: Option<PathBuf>,
    /// Also write the per-point score cache to `scores.csv`.
    #[arg(long)]
    pub dump_cache: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory produced by `gen-synth` (train_* and test_* files).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// lambda1 over {0, .2, .5, .8, 1} with lambda2 = 0.5, rest 0.
    Lambda1,
    /// lambda2 over {0, .2, .5, .8, 1} with lambda1 = .5, lambda3 = .8, lambda4 = .2.
    Lambda2,
    Lambda3,
    Lambda4,
    /// The four distance metrics.
    Metrics,
    /// One term switched on at a time.
    SmdlTerms,
    LearningRate,
    BatchSize,
    RefreshRate,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Grid axis `key=v1,v2,...`; repeat for a cartesian product.
    #[arg(long)]
    pub grid: Vec<String>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Seeds per cell (seed, seed+1, ...).
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "5000,10000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    /// Greedy vs. subset optimum with a monotone submodular objective.
    Greedy,
    /// Greedy must be exact when every term is modular.
    Modular,
    /// Two-stage partitioned selection vs. subset optimum.
    Partitioned,
    /// Greedy vs. ordered optimum with redundancy on. No guarantee applies
    /// (the chain objective is order-dependent), so this is reported only.
    Chain,
    All,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long)]
    pub instances: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Bin,
    Csv,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 2000)]
    pub train: usize,
    #[arg(long, default_value_t = 1000)]
    pub test: usize,
    #[arg(long, default_value_t = 0.45)]
    pub noise: f64,
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    #[arg(long, value_enum, default_value_t = Format::Bin)]
    pub format: Format,
}
