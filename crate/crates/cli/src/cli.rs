//! Command-line grammar.

use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

/// Earthquake response dataset generation, simulation and surrogate
/// training for lumped-mass building models.
///
/// Exit codes: 0 success, 2 configuration or usage error, 3 dataset
/// generation failure, 4 incompatible or malformed artifact, 5 numerical
/// failure. Set SEISFORGE_THREADS to cap worker threads and RUST_LOG to
/// change log verbosity.
#[derive(Debug, Parser)]
#[command(name = "seisforge", version, max_term_width = 100)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    Gen(GenArgs),
    Simulate(SimulateArgs),
    Identify(IdentifyArgs),
    Train(TrainArgs),
    Finetune(FinetuneArgs),
    Predict(PredictArgs),
    Evaluate(EvaluateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gen(_) => "gen",
            Self::Simulate(_) => "simulate",
            Self::Identify(_) => "identify",
            Self::Train(_) => "train",
            Self::Finetune(_) => "finetune",
            Self::Predict(_) => "predict",
            Self::Evaluate(_) => "evaluate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    GaussNewton,
    Evolutionary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
}

/// Output options shared by commands that write response histories.
#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Write an SVG time-history chart per selected floor
    #[arg(long)]
    pub plot: bool,

    /// Floors to plot: comma-separated 1-based numbers or `mid`, `top`, `all`
    #[arg(long, value_name = "LIST", default_value = "top")]
    pub floors: String,
}

/// Generate a training dataset of simulated building responses.
#[derive(Debug, Args)]
pub struct GenArgs {
    /// Dataset specification (TOML)
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// Override the specification's seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory to write the dataset into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Simulate one building under one ground motion.
#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Building description or lumped-mass model (TOML)
    #[arg(long, value_name = "PATH")]
    pub building: PathBuf,

    /// Ground motion record (text, `# dt=... unit=...` header)
    #[arg(long, value_name = "PATH")]
    pub motion: PathBuf,

    /// Simulation settings (TOML): direction, damping_ratio, dt
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Sway direction used when reducing a building description
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,

    /// Required time step, s; the motion must match unless --resample is given
    #[arg(long, value_name = "SECONDS")]
    pub dt: Option<f64>,

    /// Resample the motion to the required time step instead of failing
    #[arg(long)]
    pub resample: bool,

    /// Also write the response of the uniform period-matched linear model
    #[arg(long)]
    pub simplified: bool,

    #[command(flatten)]
    pub plot: PlotArgs,

    /// Directory to write responses into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Recover story stiffnesses from a measured displacement response.
#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Model supplying the masses and the initial stiffness guess (TOML)
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,

    /// Ground motion that produced the measurement
    #[arg(long, value_name = "PATH")]
    pub motion: PathBuf,

    /// Measured response history (SFRH)
    #[arg(long, value_name = "PATH")]
    pub response: PathBuf,

    /// Identification settings (TOML): method, damping_ratio, initial_scale
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Sway direction used when reducing a building description
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,

    /// Search method
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,

    /// Seed of the evolutionary search
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory to write the identified model into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Train the response decoder on a generated dataset.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training configuration (TOML): seed, model, optim, input_clip
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// Dataset directory or manifest
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Override the configuration's seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory to write the checkpoint and training log into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Fine-tune low-rank adapters on top of a trained checkpoint.
#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Base checkpoint (SGPT)
    #[arg(long, value_name = "PATH")]
    pub base: PathBuf,

    /// Fine-tuning configuration (TOML): seed, rank, alpha, optim, samples
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// Dataset directory or manifest
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Override the configuration's seed
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,

    /// Directory to write the adapter and log into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Predict a response history with a trained checkpoint.
///
/// The input is either a dataset sample (--data with --sample) or a
/// building and motion pair (--building with --motion).
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("input").required(true).args(["data", "building"])))]
pub struct PredictArgs {
    /// Trained checkpoint (SGPT)
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    /// Adapter to apply on top of the checkpoint (SGPA)
    #[arg(long, value_name = "PATH")]
    pub adapter: Option<PathBuf>,

    /// Dataset directory or manifest holding --sample
    #[arg(long, value_name = "PATH", requires = "sample", conflicts_with_all = ["building", "motion"])]
    pub data: Option<PathBuf>,

    /// Sample id within --data; its oracle becomes the reference
    #[arg(long, value_name = "ID", requires = "data")]
    pub sample: Option<String>,

    /// Building description or lumped-mass model (TOML)
    #[arg(long, value_name = "PATH", requires = "motion")]
    pub building: Option<PathBuf>,

    /// Ground motion record
    #[arg(long, value_name = "PATH", requires = "building")]
    pub motion: Option<PathBuf>,

    /// Reference response (SFRH) to score the prediction against
    #[arg(long, value_name = "PATH")]
    pub reference: Option<PathBuf>,

    /// Prediction settings (TOML): direction, damping_ratio
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Sway direction used when reducing a building description
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,

    /// Resample the motion to the checkpoint's time step
    #[arg(long)]
    pub resample: bool,

    #[command(flatten)]
    pub plot: PlotArgs,

    /// Directory to write the prediction into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// Score a checkpoint on one dataset split.
#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Trained checkpoint (SGPT)
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,

    /// Adapter to apply on top of the checkpoint (SGPA)
    #[arg(long, value_name = "PATH")]
    pub adapter: Option<PathBuf>,

    /// Dataset directory or manifest
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,

    /// Split to evaluate
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,

    /// Evaluation settings (TOML): split, plots
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Skip the worst-case overlay charts
    #[arg(long)]
    pub no_plots: bool,

    /// Directory to write the report into
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
