use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use levelcvae::dataset::DatasetError;
use levelcvae::generation::RelabelMode;
use levelcvae::Game;

mod commands;
mod config;
mod report;
mod run;

/// Configuration or usage problem; exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug, Parser)]
#[command(name = "levelcvae", version, about = "Conditional VAE toolkit for tile-based level segments")]
pub struct Cli {
    /// TOML file with corpus paths, tile maps and presets; flags override it.
    #[arg(long, global = true, env = "LEVELCVAE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Worker threads for data building and evaluation.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut VGLC levels into labelled 16x16 segments.
    BuildDataset(BuildArgs),
    /// Train a CVAE on a dataset file.
    Train(TrainArgs),
    /// Sample segments under a label.
    Generate(GenerateArgs),
    /// Re-decode segments under a new label.
    Relabel(RelabelArgs),
    /// Run an evaluation suite.
    Evaluate(EvaluateArgs),
    /// Serve the JSON API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Elements,
    Patterns,
    Blend,
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Required for `elements`.
    #[arg(long)]
    pub game: Option<Game>,
    /// Window stride; 1 by default, 16 for patterns.
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long, env = "VGLC_ROOT")]
    pub corpus_root: Option<PathBuf>,
    /// Per-segment pattern label corrections.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_parser = ["32", "64", "128"])]
    pub latent: Option<String>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub decay_every: Option<u32>,
    #[arg(long)]
    pub decay_factor: Option<f64>,
    #[arg(long)]
    pub kl_weight: Option<f64>,
    /// Train on a seeded random subset of this many segments.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Bitstring such as `10011`.
    #[arg(long)]
    pub label: String,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also print the segments.
    #[arg(long)]
    pub print: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RelabelArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Segment file; header labels are used as source labels when present.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub target_label: String,
    /// Overrides header and derived source labels.
    #[arg(long)]
    pub source_label: Option<String>,
    #[arg(long, default_value_t = RelabelMode::Mean)]
    pub mode: RelabelMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub print: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Elements,
    Blend,
    Edist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    Random,
    Training,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_enum)]
    pub suite: Suite,
    /// Samples per label; 1000 by default.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training dataset: label frequencies for `elements`, classifier and
    /// reference data for `blend` and `edist`.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SourceArg::Random)]
    pub source: SourceArg,
    /// Labels averaged at each end of the frequency ranking.
    #[arg(long, default_value_t = 8)]
    pub trend_k: usize,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `.ckpt` files.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    /// Allow cross-origin requests (for a UI dev server).
    #[arg(long)]
    pub cors: bool,
}

/// Name of a well-known failure, printed ahead of the message.
fn error_kind(err: &anyhow::Error) -> Option<&'static str> {
    err.chain().find_map(|e| match e.downcast_ref::<DatasetError>() {
        Some(DatasetError::MissingCorpus(_)) => Some("MissingCorpus"),
        Some(DatasetError::NeedsSections { .. }) => Some("NeedsSections"),
        _ => None,
    })
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<Usage>() || matches!(e.downcast_ref::<DatasetError>(), Some(DatasetError::MissingCorpus(_)))
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match error_kind(&err) {
                Some(kind) => eprintln!("error: {kind}: {err:#}"),
                None => eprintln!("error: {err:#}"),
            }
            if is_usage(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
