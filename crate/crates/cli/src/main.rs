//! `bpc`: record trajectory buffers, distill pseudo-coresets, and evaluate them.
//!
//! Exit codes: 0 success, 2 configuration error, 3 IO or file-format
//! error, 4 numerical failure.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod dataset;

use config::{RawConfig, RunConfig, OUT_ENV};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(bpc::Error),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_io_or_format() => 3,
            CliError::Core(e) if e.is_numeric() => 4,
            // shape and contract violations come from inconsistent settings
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl From<bpc::Error> for CliError {
    fn from(e: bpc::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser, Debug)]
#[command(name = "bpc", version, about = "Bayesian pseudo-coresets by contrastive divergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Train networks on the real data and store their per-epoch trajectories.
    Buffer,
    /// Learn a synthetic set against a recorded buffer.
    Distill,
    /// Retrain on a coreset over several seeds and report test accuracy.
    Eval,
    /// Evaluate a coreset next to a random real subset of the same size.
    Compare,
    /// Evaluate a coreset on every configured architecture.
    CrossArch,
    /// Record one buffer per training loss and distill every (loss, energy) pair.
    CrossLoss,
}

/// Flags override the config file; each maps onto one `section.key`.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Config file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Any setting as `section.key=value`; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[arg(long, global = true, value_name = "blobs|idx")]
    dataset: Option<String>,
    #[arg(long, global = true)]
    images: Option<String>,
    #[arg(long, global = true)]
    labels: Option<String>,
    #[arg(long, global = true)]
    test_images: Option<String>,
    #[arg(long, global = true)]
    test_labels: Option<String>,
    #[arg(long, global = true)]
    downsample: Option<String>,
    #[arg(long, global = true)]
    arch: Option<String>,
    #[arg(long, global = true)]
    ipc: Option<String>,
    #[arg(long, global = true, value_name = "real|noise")]
    init: Option<String>,
    #[arg(long, global = true)]
    energy: Option<String>,
    #[arg(long, global = true)]
    alpha: Option<String>,
    #[arg(long, global = true)]
    langevin_steps: Option<String>,
    #[arg(long, global = true)]
    noise_temp: Option<String>,
    #[arg(long, global = true)]
    anchors_per_step: Option<String>,
    #[arg(long, global = true)]
    iters: Option<String>,
    #[arg(long, global = true)]
    trajectories: Option<String>,
    /// Epochs per recorded trajectory.
    #[arg(long, global = true)]
    epochs: Option<String>,
    #[arg(long, global = true)]
    loss: Option<String>,
    #[arg(long, global = true)]
    coreset: Option<String>,
    #[arg(long, global = true)]
    jobs: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    out: Option<String>,
}

impl Overrides {
    fn apply(&self, raw: &mut RawConfig) -> Result<(), CliError> {
        let pairs = [
            ("data.dataset", &self.dataset),
            ("data.images", &self.images),
            ("data.labels", &self.labels),
            ("data.test_images", &self.test_images),
            ("data.test_labels", &self.test_labels),
            ("data.downsample", &self.downsample),
            ("model.arch", &self.arch),
            ("distill.ipc", &self.ipc),
            ("distill.init", &self.init),
            ("distill.energy", &self.energy),
            ("distill.alpha", &self.alpha),
            ("distill.langevin_steps", &self.langevin_steps),
            ("distill.noise_temp", &self.noise_temp),
            ("distill.anchors_per_step", &self.anchors_per_step),
            ("distill.iters", &self.iters),
            ("buffer.trajectories", &self.trajectories),
            ("buffer.epochs", &self.epochs),
            ("buffer.loss", &self.loss),
            ("eval.coreset", &self.coreset),
            ("run.jobs", &self.jobs),
            ("run.seed", &self.seed),
            ("run.out", &self.out),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                raw.set(key, v);
            }
        }
        for pair in &self.set {
            raw.set_pair(pair)?;
        }
        Ok(())
    }
}

fn resolve(overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut raw = match &overrides.config {
        Some(path) => RawConfig::load(path)?,
        None => RawConfig::default(),
    };
    overrides.apply(&mut raw)?;
    let env_out = std::env::var(OUT_ENV).ok();
    RunConfig::resolve(&raw, env_out.as_deref())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(&cli.overrides)?;
    // 0 lets rayon pick one thread per core
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global()
        .map_err(|e| CliError::config(format!("cannot start {} worker threads: {e}", cfg.jobs)))?;
    match cli.command {
        Command::Buffer => commands::buffer(&cfg),
        Command::Distill => commands::distill(&cfg),
        Command::Eval => commands::eval(&cfg),
        Command::Compare => commands::compare(&cfg),
        Command::CrossArch => commands::cross_arch(&cfg),
        Command::CrossLoss => commands::cross_loss(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bpc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
