use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "audsae",
    version,
    about = "TopK sparse autoencoders, linear probes and disentanglement metrics over pooled embeddings"
)]
pub struct Cli {
    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Linear probe on raw pooled embeddings (or on SAE codes with --checkpoint).
    Probe(ProbeArgs),
    /// Train one SAE on the train split of a layer.
    SaeTrain(SaeTrainArgs),
    /// Reconstruction MSE of a checkpoint on the test split.
    SaeEval(SaeEvalArgs),
    /// SAE + probe (+ disentanglement) for every layer x sparsity cell.
    Sweep(SweepArgs),
    /// Lasso regressions from a representation to factor values.
    Disentangle(DisentangleArgs),
    /// summary.csv and SVG figures from a run tree.
    Report(ReportArgs),
}

/// Which manifest split a command reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitChoice {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ProbeOpts {
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 200)]
    pub probe_epochs: usize,
    #[arg(long, default_value_t = 30)]
    pub probe_patience: usize,
    /// Standardize input columns with train-split statistics.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SaeOpts {
    #[arg(long, default_value_t = 2048)]
    pub latent: usize,
    #[arg(long, default_value_t = 100)]
    pub sae_epochs: usize,
    #[arg(long, default_value_t = 20)]
    pub sae_patience: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct LassoOpts {
    /// `c*lmax`, a fixed value, or `grid:c1,c2,...`.
    #[arg(long, default_value = "0.01*lmax")]
    pub lam: String,
    #[arg(long, default_value_t = 0.2)]
    pub eval_frac: f64,
    /// Score R² on the fit rows instead of a held-out part.
    #[arg(long)]
    pub in_sample: bool,
    #[arg(long, default_value_t = 1000)]
    pub lasso_max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub lasso_tol: f64,
    /// Split whose utterances are regressed.
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
}

#[derive(Debug, Clone, Args)]
pub struct ProbeArgs {
    /// `NAME=PATH` or `PATH` (layer named after the file stem); repeatable.
    #[arg(long, required = true)]
    pub manifest: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Probe the codes of this SAE instead of the raw embeddings (one manifest only).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[command(flatten)]
    pub probe: ProbeOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SaeTrainArgs {
    #[arg(long)]
    pub manifest: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub sparsity: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub sae: SaeOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SaeEvalArgs {
    #[arg(long)]
    pub manifest: String,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output JSON file; defaults to `eval.json` next to the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitChoice::Test)]
    pub split: SplitChoice,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, required = true)]
    pub manifest: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for cells.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Comma-separated, strictly increasing, each in (0, 1).
    #[arg(long, default_value = "0.75,0.80,0.85,0.90,0.95,0.99")]
    pub sparsities: String,
    /// Factor CSV; enables disentanglement in every cell.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    /// Factor family JSON; defaults to the built-in eGeMAPS grouping.
    #[arg(long)]
    pub family_map: Option<PathBuf>,
    /// Skip the raw-embedding baseline cells.
    #[arg(long)]
    pub no_baseline: bool,
    #[command(flatten)]
    pub sae: SaeOpts,
    #[command(flatten)]
    pub probe: ProbeOpts,
    #[command(flatten)]
    pub lasso: LassoOpts,
}

#[derive(Debug, Clone, Args)]
pub struct DisentangleArgs {
    #[arg(long)]
    pub manifest: String,
    #[arg(long)]
    pub factors: PathBuf,
    #[arg(long)]
    pub family_map: Option<PathBuf>,
    /// Regress from the codes of this SAE; raw embeddings otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub lasso: LassoOpts,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run tree written by `sweep`.
    #[arg(long)]
    pub run: PathBuf,
    /// Output directory; defaults to `<run>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
