use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fraclab_core::dynamics::MapKind;
use fraclab_core::pipeline::Target;

#[derive(Debug, Parser)]
#[command(name = "fraclab", version, about = "Fractional logistic maps: trajectories, corpora, parameter-recovery networks")]
pub struct Cli {
    /// Worker threads for parallel stages (overrides FRACLAB_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print one trajectory, one value per line.
    Trajectory(TrajectoryArgs),
    /// Bifurcation diagram data as `mu,value` CSV.
    Feigenbaum(FeigenbaumArgs),
    /// Build a labeled trajectory corpus.
    Corpus(CorpusArgs),
    /// Build a balanced delayed-vs-plain corpus.
    ClassifyCorpus(ClassifyCorpusArgs),
    /// Train a network on a corpus.
    Train(TrainArgs),
    /// Predict one corpus split with a checkpoint.
    Evaluate(EvaluateArgs),
    /// ROC curve and AUC for delayed-vs-plain predictions.
    Roc(RocArgs),
    /// Error tables and figures for one or more prediction files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[arg(long)]
    pub kind: MapKind,
    #[arg(long)]
    pub mu: f64,
    #[arg(long)]
    pub nu: f64,
    #[arg(long)]
    pub x0: f64,
    /// Initial delayed value; defaults to x0.
    #[arg(long)]
    pub y0: Option<f64>,
    /// Number of values including x(0).
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Write `n,x` CSV here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FeigenbaumArgs {
    #[arg(long)]
    pub kind: MapKind,
    #[arg(long)]
    pub nu: f64,
    #[arg(long)]
    pub x0: f64,
    #[arg(long)]
    pub mu_lo: f64,
    #[arg(long)]
    pub mu_hi: f64,
    #[arg(long, default_value_t = 0.001)]
    pub mu_step: f64,
    /// Terms computed per μ.
    #[arg(long, default_value_t = 200)]
    pub total: usize,
    /// Trailing terms kept per μ.
    #[arg(long, default_value_t = 100)]
    pub keep: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also render the diagram as SVG.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    /// paper-delayed, paper-plain, desk (delayed) or desk-plain.
    #[arg(long, default_value = "desk")]
    pub preset: String,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub pad_length: usize,
    /// Output directory (corpus.csv and manifest.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum QuotaPreset {
    /// 5000/1000/1000 per class.
    Desk,
    /// Full-scale per-class quotas.
    Paper,
}

#[derive(Debug, Args)]
pub struct ClassifyCorpusArgs {
    #[arg(long, default_value = "desk")]
    pub delayed_preset: String,
    #[arg(long, default_value = "desk-plain")]
    pub plain_preset: String,
    #[arg(long, value_enum, default_value_t = QuotaPreset::Desk)]
    pub quotas: QuotaPreset,
    /// Per-class overrides of the quota preset.
    #[arg(long)]
    pub train: Option<usize>,
    #[arg(long)]
    pub validation: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 50)]
    pub pad_length: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NetworkPreset {
    /// conv 32/64, three BiLSTMs of 32 units.
    Full,
    /// conv 8/16, one BiLSTM of 16 units.
    Desk,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory or CSV file.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub target: Target,
    /// Output directory for model.ckpt and train_report.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = NetworkPreset::Full)]
    pub network: NetworkPreset,
    #[arg(long)]
    pub conv1: Option<usize>,
    #[arg(long)]
    pub conv2: Option<usize>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    #[arg(long)]
    pub lstm_layers: Option<usize>,
    #[arg(long)]
    pub lstm_units: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub dense_units: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Needed only for single-output regression models (mu or nu).
    #[arg(long)]
    pub target: Option<Target>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Predictions CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory for roc.csv and roc.svg.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Prediction files to join; e.g. one μ model and one ν model.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Absolute-error threshold for the high-error histograms.
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Histograms only include records longer than this (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub min_length: usize,
    #[arg(long, default_value_t = 40)]
    pub density_bins: usize,
}
