mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rpd_core::predictor::{AuxInput, Mode};

/// Residual prior diffusion on the Datasaurus grid.
///
/// Every subcommand accepts `--config FILE`: a text file of `key = value` lines
/// whose keys are long flag names without the leading dashes (`mode = rpd-v`,
/// `hetero = true`). Blank lines and lines starting with `#` are ignored. Flags
/// given on the command line override the file.
#[derive(Debug, Parser)]
#[command(name = "rpd", version, args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the grid training set and its replicated ground truth.
    MakeData(MakeDataArgs),
    /// Train the vector-quantized prior on a dataset.
    TrainPrior(TrainPriorArgs),
    /// Train a denoising network.
    Train(TrainArgs),
    /// Generate samples from a trained network.
    Sample(SampleArgs),
    /// Compare generated samples with a reference set.
    Eval(EvalArgs),
    /// Run the randomized identity and gradient checks.
    Verify(VerifyArgs),
    /// Write SVG scatter and trajectory plots.
    Plot(PlotArgs),
    /// Print a noise schedule as CSV.
    Schedule(ScheduleArgs),
}

#[derive(Debug, Args)]
pub struct MakeDataArgs {
    /// Datasaurus Dozen TSV; defaults to $RPD_DATA_DIR/DatasaurusDozen.tsv, then data/DatasaurusDozen.tsv.
    #[arg(long)]
    pub datasaurus: Option<PathBuf>,
    /// Scale applied to every cell.
    #[arg(long, default_value_t = 0.1)]
    pub scale: f64,
    /// Use nine log-spaced per-cell scales in [0.05, 1] instead of --scale.
    #[arg(long)]
    pub hetero: bool,
    #[arg(long, default_value_t = rpd_core::data::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Nine comma-separated source names, bottom-left cell first.
    #[arg(long, value_delimiter = ',')]
    pub selection: Option<Vec<String>>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainPriorArgs {
    /// Training set CSV (columns x,y with optional cell).
    #[arg(long, default_value = "out/train.csv")]
    pub data: PathBuf,
    /// Optimizer iterations; defaults to 15000, or 5000 with --desk.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Iterations with the decoder variance held at 1; defaults to two thirds of --iters.
    #[arg(long)]
    pub frozen_iters: Option<usize>,
    /// Use the shortened schedule.
    #[arg(long)]
    pub desk: bool,
    #[arg(long, default_value_t = 16)]
    pub codes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value = "out/train.csv")]
    pub data: PathBuf,
    #[arg(long, default_value = "rpd-eps")]
    pub mode: Mode,
    /// Prior checkpoint; required for rpd-eps and rpd-v.
    #[arg(long)]
    pub prior: Option<PathBuf>,
    /// Iterations; defaults to the desk (8000 / 16000) or --full (60000 / 120000) budget.
    #[arg(long)]
    pub iters: Option<usize>,
    /// Use the full-length iteration budget.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 1278)]
    pub batch: usize,
    /// Diffusion steps T of the log-linear schedule.
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Use the 1000-step linear schedule instead.
    #[arg(long)]
    pub linear_t1000: bool,
    /// Auxiliary input: omega, mu or none. Defaults to omega for rpd modes, none otherwise.
    #[arg(long)]
    pub aux: Option<AuxInput>,
    #[arg(long, default_value_t = rpd_core::diffusion::DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256,126,64")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = rpd_core::predictor::DEFAULT_TIME_DIM)]
    pub time_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub log_interval: usize,
    /// Save a checkpoint every N iterations (0 disables).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_interval: usize,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeedArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Several seeds, comma separated; outputs go to OUT/seed-N/.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Seeds run in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Predictor checkpoint; `{seed}` is replaced by each seed.
    #[arg(long, default_value = "out/predictor.txt")]
    pub predictor: String,
    /// Prior checkpoint for rpd modes; `{seed}` is replaced by each seed.
    #[arg(long)]
    pub prior: Option<String>,
    /// Expected mode; must match the checkpoint.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long, default_value_t = 6390)]
    pub count: usize,
    /// Reduced number of inference steps; defaults to the training horizon.
    #[arg(long)]
    pub infer_steps: Option<usize>,
    #[arg(long, default_value_t = rpd_core::diffusion::DEFAULT_SIGMA_MIN)]
    pub sigma_min: f64,
    /// Export full reverse trajectories of the first N samples.
    #[arg(long, default_value_t = 0)]
    pub trajectories: usize,
    #[command(flatten)]
    pub seeds: SeedArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, default_value = "out/samples.csv")]
    pub samples: PathBuf,
    #[arg(long, default_value = "out/ground_truth.csv")]
    pub reference: PathBuf,
    #[arg(long, default_value_t = rpd_core::data::DEFAULT_SPACING)]
    pub spacing: f64,
    /// Seed of the subsample used for the global distance on large sets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value_t = 10_000)]
    pub draws: usize,
    /// Stabilizer for the auxiliary inputs; above 0 the exact identities are skipped.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, default_value = "out/samples.csv")]
    pub points: PathBuf,
    /// Drawn underneath in grey.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// CSV with sample,step,x,y rows.
    #[arg(long)]
    pub trajectories: Option<PathBuf>,
    #[arg(long, default_value_t = rpd_core::data::DEFAULT_SPACING)]
    pub spacing: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise_min: f64,
    #[arg(long, default_value_t = 100.0)]
    pub noise_max: f64,
    #[arg(long)]
    pub linear_t1000: bool,
    /// Print the kept steps of a reduced schedule instead.
    #[arg(long)]
    pub infer_steps: Option<usize>,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
