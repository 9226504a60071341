//! `dagsurv`: generate survival data from a DAG, train and score the
//! DAG-informed survival model, emit per-instance survival curves, and
//! check the entropy-gap properties of DAG-factored sources.
//!
//! Every command writes its data files plus one `<command>-manifest.json`
//! recording resolved settings, seeds, input digests, and outputs. Data
//! files are byte-identical across reruns with the same seed; timestamps
//! live only in the manifest.
//!
//! Exit codes: 0 success, 1 data error (unreadable or inconsistent files,
//! failed checks), 2 usage error (bad flags or presets). A panic is an
//! internal bug and aborts with the process default.

mod commands;
mod manifest;
mod presets;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(err: impl std::fmt::Display) -> Self {
        CliError::Data(anyhow::anyhow!("{err}"))
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Data(err)
    }
}

#[derive(Parser)]
#[command(name = "dagsurv", version, about = "DAG-informed survival analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a DAG (or take one) and draw a synthetic survival dataset
    Generate(GenerateArgs),
    /// Train the survival model on a dataset plus adjacency file
    Train(TrainArgs),
    /// Score a checkpoint with bootstrapped time-dependent concordance
    Evaluate(EvaluateArgs),
    /// Emit per-instance survival curves from a checkpoint
    Predict(PredictArgs),
    /// Check entropy-gap properties of discrete DAG-factored sources
    Propcheck(PropcheckArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CensorModeArg {
    /// Censor exactly round(fraction * N) instances at U(0, own time)
    Exact,
    /// Draw one U(0, max time) candidate per instance; censor when earlier
    UniformGlobal,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Named settings bundle: synthetic-small or synthetic-large
    #[arg(long)]
    pub preset: Option<String>,
    /// Reuse an existing adjacency CSV instead of sampling a DAG
    #[arg(long)]
    pub adjacency: Option<PathBuf>,
    /// Covariate count; the sampled DAG gets one extra target node
    #[arg(long)]
    pub covariates: Option<usize>,
    /// Expected in-plus-out degree of the sampled DAG
    #[arg(long)]
    pub expected_degree: Option<f64>,
    /// Number of instances to draw
    #[arg(long)]
    pub samples: Option<usize>,
    /// Multiplier on the exponential in the event-time equation
    #[arg(long)]
    pub scale_c: Option<f64>,
    /// Fraction of instances to censor (exact mode only)
    #[arg(long)]
    pub censor_fraction: Option<f64>,
    #[arg(long, value_enum, default_value_t = CensorModeArg::Exact)]
    pub censor_mode: CensorModeArg,
    /// Mean of the additive noise on the event time
    #[arg(long)]
    pub target_noise_mean: Option<f64>,
    /// Spread of the additive noise on the event time
    #[arg(long)]
    pub target_noise_scale: Option<f64>,
    /// Read --target-noise-scale as a standard deviation, not a variance
    #[arg(long)]
    pub noise_scale_is_stddev: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset CSV: x1..xL,time,event with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Adjacency CSV over the L+1 nodes, target node last
    #[arg(long)]
    pub adjacency: PathBuf,
    /// Named hyperparameters: synthetic-small, synthetic-large, metabric, gbsg
    #[arg(long)]
    pub preset: Option<String>,
    /// TOML settings file, overrides the preset field by field
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ablation: zero every adjacency weight before training
    #[arg(long)]
    pub zero_dag: bool,
    /// Number of time bins (default: ceil of the max observed time)
    #[arg(long)]
    pub time_bins: Option<usize>,
    /// Override the epoch cap
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Base seed; initialization, shuffling, and the split derive from it
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    /// Score the whole file without re-deriving the training split
    All,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset CSV; must be the training file unless --split all
    #[arg(long)]
    pub data: PathBuf,
    /// Which part to score; the split is re-derived from checkpoint metadata
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Bootstrap resample count
    #[arg(short, default_value_t = 1000)]
    pub b: usize,
    /// Latent prior draws averaged per prediction; 0 pins z at the mean
    #[arg(long, default_value_t = 32)]
    pub latent_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Comma-separated row indices to predict (default: every row)
    #[arg(long, value_delimiter = ',')]
    pub rows: Option<Vec<usize>>,
    /// Predict only the first N rows
    #[arg(long, conflicts_with = "rows")]
    pub limit: Option<usize>,
    /// Latent prior draws averaged per prediction; 0 pins z at the mean
    #[arg(long, default_value_t = 32)]
    pub latent_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args)]
pub struct PropcheckArgs {
    /// Net specification file to check
    #[arg(long, conflicts_with = "random")]
    pub net: Option<PathBuf>,
    /// Check this many random dependent nets plus as many vacuous ones
    #[arg(long)]
    pub random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
        Command::Predict(args) => commands::predict(args),
        Command::Propcheck(args) => commands::propcheck(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Data(err)) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
