//! `dslr` — pipeline driver for dynamic-to-static LiDAR scan translation.
//!
//! Subcommands cover the whole workflow: synthesize paired runs, build the
//! training corpus, train each model stage, translate scans, and evaluate
//! reconstruction quality, trajectories, and noise robustness.
//!
//! Conventions shared by every subcommand:
//! * `--config` points at a sectioned TOML file; `--seed`/`--threads`
//!   override it; the fully-resolved result is logged and written to
//!   `<out>/resolved_config.toml`.
//! * `<out>/provenance.txt` records tool version, command, config hash, and
//!   seed for the artifacts beside it.
//! * All writes are atomic, outputs are deterministic for a fixed config and
//!   seed, and reruns produce byte-identical files.
//! * Errors print one machine-parsable stderr line `error[<kind>]: ...` and
//!   exit with 1 (usage), 2 (I/O), 3 (validation), or 4 (divergence).
//! * `DSLR_LOG={error,info,debug}` controls log verbosity (stderr).

mod cmd;
mod config;
mod errors;
mod runctx;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::errors::CliError;
use crate::runctx::RunCtx;

#[derive(Parser)]
#[command(
    name = "dslr",
    version,
    about = "dynamic-to-static lidar scan translation pipeline",
    disable_help_subcommand = true
)]
struct Cli {
    /// Sectioned TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Worker threads for evaluation fan-out; overrides the config file.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Output directory for artifacts and run records.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a paired static/dynamic scan sequence from a synthetic scene.
    Simulate,
    /// Match viewpoints between two runs and build the training manifest.
    Pair(PairArgs),
    /// Train one stage of the translation model (or the quality regressor).
    Train(TrainArgs),
    /// Translate dynamic scans to their static reconstruction.
    Reconstruct(ReconstructArgs),
    /// Compare reconstructed scans against references, scan by scan.
    EvalRecon(EvalReconArgs),
    /// Absolute/relative trajectory error between two TUM files.
    EvalTraj(EvalTrajArgs),
    /// Noise-robustness study: error and quality score across a sigma grid.
    NoiseSweep(NoiseSweepArgs),
}

#[derive(Args)]
struct PairArgs {
    /// Directory of the static (reference) run.
    #[arg(long = "static", value_name = "DIR")]
    static_dir: PathBuf,
    /// Directory of the dynamic run.
    #[arg(long = "dynamic", value_name = "DIR")]
    dynamic_dir: PathBuf,
    /// Refine targets with ground-truth masks where available.
    #[arg(long)]
    refine_seg: bool,
    /// Also write train/val/test manifest splits, e.g. "0.8,0.1,0.1".
    #[arg(long, value_name = "A,B,C")]
    split: Option<String>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Phase {
    Ae,
    Disc,
    Adv,
    Uda,
    Lqi,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Ae => "ae",
            Phase::Disc => "disc",
            Phase::Adv => "adv",
            Phase::Uda => "uda",
            Phase::Lqi => "lqi",
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// Pipeline stage to train.
    #[arg(long, value_enum)]
    phase: Phase,
    /// Pairing manifest (pairs.tsv) naming scans and targets.
    #[arg(long, value_name = "PATH")]
    manifest: PathBuf,
    /// Checkpoint to resume from (required for every stage after the first).
    #[arg(long, value_name = "PATH")]
    ckpt_in: Option<PathBuf>,
    /// Directory of target-domain scans (uda stage only).
    #[arg(long, value_name = "DIR")]
    target_scans: Option<PathBuf>,
    /// Override the configured epoch count for this stage.
    #[arg(long, value_name = "N")]
    epochs: Option<usize>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Trained model checkpoint (adversarial stage or later).
    #[arg(long, value_name = "PATH")]
    ckpt: PathBuf,
    /// Directory of scans to translate (.rimg or .bin).
    #[arg(long, value_name = "DIR")]
    scans: PathBuf,
    /// Directory of segmentation masks: translate mover cells only.
    #[arg(long, value_name = "DIR")]
    seg_mask: Option<PathBuf>,
}

#[derive(Args)]
struct EvalReconArgs {
    /// Directory of predicted scans.
    #[arg(long, value_name = "DIR")]
    pred: PathBuf,
    /// Directory of reference scans (matched by file stem).
    #[arg(long, value_name = "DIR")]
    gt: PathBuf,
    /// Quality-regressor checkpoint; adds the lqi column when given.
    #[arg(long, value_name = "PATH")]
    lqi_ckpt: Option<PathBuf>,
}

#[derive(Args)]
struct EvalTrajArgs {
    /// Estimated trajectory (TUM format).
    #[arg(long, value_name = "PATH")]
    est: PathBuf,
    /// Reference trajectory (TUM format).
    #[arg(long, value_name = "PATH")]
    gt: PathBuf,
    /// Relative-error frame distance.
    #[arg(long, value_name = "N", default_value_t = 1)]
    delta: usize,
    /// Skip the rigid alignment before absolute-error statistics.
    #[arg(long)]
    no_align: bool,
    /// Timestamp association tolerance, seconds.
    #[arg(long, value_name = "SEC", default_value_t = 0.02)]
    max_dt: f64,
}

#[derive(Args)]
struct NoiseSweepArgs {
    /// Directory of clean scans to degrade (.rimg or .bin).
    #[arg(long, value_name = "DIR")]
    scans: PathBuf,
    /// Trained quality-regressor checkpoint.
    #[arg(long, value_name = "PATH")]
    lqi_ckpt: PathBuf,
    /// Comma-separated noise levels (meters).
    #[arg(long, value_name = "S0,S1,...", default_value = "0,0.02,0.05,0.1,0.15")]
    sigmas: String,
    /// Repetitions per (sigma, scan) cell.
    #[arg(long, value_name = "N", default_value_t = 3)]
    reps: u32,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("DSLR_LOG", "info"),
    )
    .format_timestamp(None)
    .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            // First rendered line, stripped of clap's own "error: " prefix,
            // keeps stderr machine-parsable.
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            let msg = first.strip_prefix("error: ").unwrap_or(first);
            eprintln!("{}", CliError::usage(msg));
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.kind.code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (cfg, resolved) = RunConfig::resolve(
        cli.config.as_deref(),
        cli.seed,
        cli.threads,
    )?;
    log::debug!("resolved config:\n{resolved}");
    log::info!(
        "run: seed={} threads={} out={}",
        cfg.seed,
        cfg.threads,
        cli.out.display()
    );
    let ctx = RunCtx {
        cfg,
        resolved,
        out: cli.out,
        seed_explicit: cli.seed.is_some(),
    };
    match cli.command {
        Command::Simulate => cmd::simulate::run(&ctx),
        Command::Pair(args) => cmd::pair::run(&ctx, &args),
        Command::Train(args) => cmd::train::run(&ctx, &args),
        Command::Reconstruct(args) => cmd::reconstruct::run(&ctx, &args),
        Command::EvalRecon(args) => cmd::eval_recon::run(&ctx, &args),
        Command::EvalTraj(args) => cmd::eval_traj::run(&ctx, &args),
        Command::NoiseSweep(args) => cmd::noise_sweep::run(&ctx, &args),
    }
}
