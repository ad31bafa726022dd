mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Bad arguments or missing inputs; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "edgeslm",
    version,
    about = "Cost estimates, training harness, feature selection and edge-queue simulation for packet classifiers"
)]
pub struct Cli {
    /// Seed for every random choice in the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Where reports and the run manifest go. Defaults to `edgeslm-out`,
    /// or the directory of `--out` for synth and prepare.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Md)]
    pub format: Format,
    /// Profile file merged over the built-in models, hardware and datasets.
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Md,
    Csv,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// FLOPs, memory and latency of models on devices.
    Estimate(EstimateArgs),
    /// Generate a synthetic dataset as prepared records.
    Synth(SynthArgs),
    /// Turn a CSV dataset into a prepared-record file.
    Prepare(PrepareArgs),
    /// Train and test the built-in classifier on one prepared file.
    Train(TrainArgs),
    /// Score a checkpoint on a prepared file.
    Eval(EvalArgs),
    /// Train on one dataset and test on another, or on every pair.
    CrossEval(CrossEvalArgs),
    /// k-fold validation.
    Kfold(KfoldArgs),
    /// Rank and select features of a CSV dataset.
    SelectFeatures(SelectArgs),
    /// Queue simulation of an edge device classifying arriving packets.
    Simulate(SimulateArgs),
    /// Metrics of a prediction file.
    ScorePreds(ScoreArgs),
    /// Combine experiment JSON outputs into one results table.
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Estimate(_) => "estimate",
            Command::Synth(_) => "synth",
            Command::Prepare(_) => "prepare",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::CrossEval(_) => "cross-eval",
            Command::Kfold(_) => "kfold",
            Command::SelectFeatures(_) => "select-features",
            Command::Simulate(_) => "simulate",
            Command::ScorePreds(_) => "score-preds",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct EstimateArgs {
    /// Model name, comma-separated names, or `all`.
    #[arg(long, default_value = "all")]
    pub model: String,
    /// Hardware name, comma-separated names, or `all` (variants excluded).
    #[arg(long, default_value = "all")]
    pub hardware: String,
    #[arg(long, default_value_t = 8)]
    pub batch: u64,
    #[arg(long, default_value_t = 128)]
    pub seq_len: u64,
    /// Bytes per floating-point value.
    #[arg(long, default_value_t = 4)]
    pub fpa: u64,
    #[arg(long, default_value_t = 100)]
    pub overhead_mb: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 1000)]
    pub rows: usize,
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 3)]
    pub informative: usize,
    #[arg(long, default_value_t = 0.5)]
    pub attack_fraction: f64,
    /// Datasets with the same family seed share their labeling rule.
    #[arg(long)]
    pub family_seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    pub levels: u32,
    #[arg(long, default_value_t = 0.0)]
    pub label_noise: f64,
    /// Prepared-record output file.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the raw table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PrepareArgs {
    /// Registered dataset name, or `synthetic` for generator CSVs.
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep a seeded random subset of at most this many records.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ZeroShot,
    FewShot,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeArg {
    FewShot,
    Complete,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 4)]
    pub epochs: usize,
    #[arg(long, default_value_t = 2e-5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    /// Width of the hashed feature space.
    #[arg(long, default_value_t = 1 << 18)]
    pub hash_dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    /// Prepared-record file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Complete)]
    pub mode: Mode,
    /// Dataset name in reports; defaults to the file stem.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long, default_value_t = 0.6)]
    pub train_ratio: f64,
    #[arg(long, default_value_t = 30_000)]
    pub few_shot_limit: usize,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct CrossEvalArgs {
    /// Training dataset of a single run.
    #[arg(long, requires = "eval", conflicts_with = "data")]
    pub train: Option<PathBuf>,
    /// Evaluation dataset of a single run.
    #[arg(long, requires = "train")]
    pub eval: Option<PathBuf>,
    /// Two or more datasets; every ordered pair is run.
    #[arg(long, num_args = 2.., conflicts_with = "eval")]
    pub data: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = RegimeArg::Complete)]
    pub regime: RegimeArg,
    #[arg(long, default_value_t = 30_000)]
    pub few_shot_limit: usize,
    #[command(flatten)]
    pub train_opts: TrainOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct KfoldArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// CSV table with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Registered dataset name, or `synthetic` for generator CSVs.
    #[arg(long)]
    pub dataset: String,
    /// lasso, rfe, pca, random-forest, correlation, or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Lasso penalty; defaults to 0.05 of the smallest all-zero penalty.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Features to keep (RFE, PCA, random forest).
    #[arg(long)]
    pub n_keep: Option<usize>,
    /// Principal components to retain.
    #[arg(long)]
    pub components: Option<usize>,
    /// Correlation filter threshold on |r|.
    #[arg(long, default_value_t = 0.9)]
    pub threshold: f64,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub hardware: Option<String>,
    /// Execution unit of the device; defaults to its first unit.
    #[arg(long)]
    pub unit: Option<String>,
    /// Fixed service time in seconds instead of the cost model.
    #[arg(long, conflicts_with_all = ["model", "measured"])]
    pub service_time: Option<f64>,
    /// Time real predictions of the checkpoint (or an untrained model).
    #[arg(long)]
    pub measured: bool,
    /// Run on the wall clock with worker threads.
    #[arg(long)]
    pub realtime: bool,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Prepared records used as packets in real-time runs.
    #[arg(long)]
    pub packets: Option<PathBuf>,
    #[arg(long, default_value_t = 3600.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Packets allowed to wait behind the one in service.
    #[arg(long)]
    pub capacity: Option<usize>,
    /// Fraction of compute taken by the device's primary task.
    #[arg(long, default_value_t = 0.0)]
    pub share: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub predictions: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    /// JSON outputs of train, cross-eval or kfold.
    #[arg(long, num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
