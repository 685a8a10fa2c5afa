//! Command-line front end. The binary parses arguments and dispatches;
//! everything else lives here so integration tests can drive commands
//! in-process.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "piloc",
    about = "Multi-agent search-and-rescue on grid worlds: map generation, training, evaluation, ablations, and replay rendering",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate connected random maps into a directory
    Genmaps(GenmapsArgs),
    /// Train the policy with the step-limit curriculum
    Train(TrainArgs),
    /// Evaluate a policy over a map set
    Eval(EvalArgs),
    /// Evaluate the four mechanism-toggle configurations
    Ablate(AblateArgs),
    /// Evaluate one checkpoint at increasing agent counts
    Scale(ScaleArgs),
    /// Render a replay log as character-grid frames
    Replay(ReplayArgs),
}

/// Overrides shared by simulation commands; precedence is
/// CLI flag > config file > built-in default.
#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// TOML config file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root RNG seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of agents
    #[arg(long)]
    pub agents: Option<usize>,
    /// Number of targets
    #[arg(long)]
    pub targets: Option<usize>,
    /// Per-episode step limit
    #[arg(long)]
    pub steps: Option<usize>,
    /// Disable the pheromone field (deposits, observation channel, reward)
    #[arg(long)]
    pub no_pheromone: bool,
    /// Disable knowledge merging between nearby agents
    #[arg(long)]
    pub no_comms: bool,
    /// Disable the test-time recovery fallback
    #[arg(long)]
    pub no_fallback: bool,
}

#[derive(Args, Debug)]
pub struct GenmapsArgs {
    /// How many maps to generate
    #[arg(long)]
    pub count: usize,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Requested obstacle density in [0, 0.45]
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of training maps (*.map)
    #[arg(long)]
    pub maps: PathBuf,
    /// Output directory for checkpoints and the metrics stream
    #[arg(long)]
    pub out: PathBuf,
    /// Stop after this many updates regardless of the curriculum
    #[arg(long)]
    pub max_updates: Option<usize>,
    /// Suppress per-update progress on stderr
    #[arg(long)]
    pub quiet: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum PolicyArg {
    Piloc,
    Frontier,
    Random,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Checkpoint file (required for --policy piloc)
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Directory of evaluation maps (*.map)
    #[arg(long)]
    pub maps: PathBuf,
    /// Output directory for the metrics table and replay logs
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub episodes: usize,
    #[arg(long, value_enum, default_value_t = PolicyArg::Piloc)]
    pub policy: PolicyArg,
    /// Skip writing per-episode replay logs
    #[arg(long)]
    pub no_replays: bool,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Directory holding piloc.ckpt, piloc-com.ckpt, piloc-ph.ckpt and
    /// piloc-com-ph.ckpt
    #[arg(long)]
    pub checkpoints: PathBuf,
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub episodes: usize,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ScaleArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub maps: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 250)]
    pub episodes: usize,
    /// Comma-separated agent counts to sweep
    #[arg(long, default_value = "2,3,4,5")]
    pub agent_counts: String,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Replay log written by eval
    #[arg(long)]
    pub log: PathBuf,
    /// Output file for the frames; stdout when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Errors carrying the process exit code: 1 for usage, 2 for runtime.
#[derive(Debug)]
pub enum RunError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 1,
            RunError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(msg) => write!(f, "usage error: {msg}"),
            RunError::Runtime(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Runtime(e)
    }
}

pub fn run(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Genmaps(args) => commands::genmaps::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run_eval(args).map(|_| ()),
        Command::Ablate(args) => commands::eval::run_ablate(args).map(|_| ()),
        Command::Scale(args) => commands::eval::run_scale(args).map(|_| ()),
        Command::Replay(args) => commands::replay::run(args),
    }
}
