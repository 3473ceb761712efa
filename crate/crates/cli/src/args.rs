use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Compress embedding tables into compositional codes and evaluate the result.
#[derive(Debug, Parser)]
#[command(name = "ccemb", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn codebooks and codes for an embedding table.
    Learn(LearnArgs),
    /// Train a grid of code shapes and report fidelity per cell.
    Sweep(SweepArgs),
    /// Storage accounting for a table shape or file.
    Size(SizeArgs),
    /// Fidelity of a reconstruction against the original table.
    Analyze(AnalyzeArgs),
    /// Paired intent/slot classifier on original and compressed embeddings.
    Eval(EvalArgs),
    /// Build a compressed file from a table and a trained checkpoint.
    Pack(PackArgs),
    /// Dump the discrete codes of a compressed file as text.
    Unpack(UnpackArgs),
    /// Expand a compressed file into a dense table.
    Reconstruct(ReconstructArgs),
}

/// Options every command accepts.
#[derive(Debug, Args)]
pub struct Common {
    /// key=value file supplying defaults for any flag of this command.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory [default: $CCEMB_OUT_DIR or ./ccemb-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Optimizer settings shared by `learn` and `sweep`.
#[derive(Debug, Args)]
pub struct TrainOpts {
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Hidden width of the code-logit encoder [default: M*K/2].
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Independent attempts per run; the lowest final loss is kept.
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    /// Neighbourhood size for the overlap metrics.
    #[arg(long, default_value_t = 20)]
    pub neighbours: usize,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    #[command(flatten)]
    pub common: Common,
    /// Embedding table (text-vec or raw-f32, detected from content).
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long = "M", default_value_t = 32)]
    pub m: usize,
    #[arg(long = "K", default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub emb: PathBuf,
    #[arg(long = "M", value_delimiter = ',', default_value = "8,16,32,64")]
    pub m: Vec<usize>,
    #[arg(long = "K", value_delimiter = ',', default_value = "16,32,64")]
    pub k: Vec<usize>,
    /// Checkpoints to report; each cell trains once to the largest.
    #[arg(long, value_delimiter = ',', default_value = "500,700,900,1100,1300")]
    pub epochs: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub train: TrainOpts,
}

#[derive(Debug, Args)]
pub struct SizeArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "V")]
    pub v: Option<u64>,
    #[arg(long = "D")]
    pub d: Option<u64>,
    #[arg(long = "M", default_value_t = 32)]
    pub m: u64,
    #[arg(long = "K", default_value_t = 16)]
    pub k: u64,
    /// Take V and D from an embedding table.
    #[arg(long)]
    pub emb: Option<PathBuf>,
    /// Take V, D, M and K from a compressed file.
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// Total encoder parameters, embeddings included, for the encoder columns.
    #[arg(long)]
    pub encoder_params: Option<u64>,
    /// Report the built-in reference encoders.
    #[arg(long)]
    pub paper_table: bool,
    /// Also write size.csv.
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Original embedding table.
    #[arg(long)]
    pub emb: PathBuf,
    /// Compressed file to compare against.
    #[arg(long, conflicts_with = "recon")]
    pub compressed: Option<PathBuf>,
    /// Dense reconstruction to compare against.
    #[arg(long)]
    pub recon: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    pub neighbours: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training set, `intent<TAB>tokens<TAB>slots` per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out set [default: every fifth line of --data].
    #[arg(long)]
    pub test_data: Option<PathBuf>,
    /// Original embedding table.
    #[arg(long)]
    pub emb: PathBuf,
    /// Compressed version of --emb [default: learned here].
    #[arg(long)]
    pub compressed: Option<PathBuf>,
    /// Token standing in for out-of-vocabulary words.
    #[arg(long)]
    pub unk: Option<String>,
    /// Keep codebook vectors fixed during classifier training.
    #[arg(long)]
    pub freeze_codebooks: bool,
    #[arg(long, default_value_t = 40)]
    pub epochs: usize,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.0)]
    pub label_smoothing: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Code shape used when no --compressed file is given.
    #[arg(long = "M", default_value_t = 32)]
    pub m: usize,
    #[arg(long = "K", default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub learn_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learn_learning_rate: f64,
    #[arg(long, default_value_t = 64)]
    pub learn_batch_size: usize,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
}

#[derive(Debug, Args)]
pub struct PackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub emb: PathBuf,
    /// CCM1 checkpoint written by `learn`.
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Debug, Args)]
pub struct UnpackArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub compressed: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub compressed: PathBuf,
    #[arg(long, default_value = "text-vec")]
    pub format: String,
}
