mod commands;
mod config;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "fuelgauge", version, about = "Reasoning-length forecasting from hidden-state fuel readings")]
struct Cli {
    /// Worker threads for per-trace parallelism (results do not depend on it).
    #[arg(long, global = true, env = "FUELGAUGE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

/// Options shared by every run-producing subcommand.
#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key; repeatable. Dedicated flags win over these.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic traces and a train/val/test manifest.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train a gauge (or direct-length) checkpoint on the train split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// gauge or direct
        #[arg(long)]
        method: Option<String>,
    },
    /// Fuel-level rMAE of estimators on manifest splits.
    EvalFuel(EvalArgs),
    /// Length-prediction rMAE of predictors on manifest splits.
    EvalLength(EvalArgs),
    /// KV-cache allocation counts and arena fragmentation per policy.
    SimAlloc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Comma-separated policy names.
        #[arg(long)]
        policies: Option<String>,
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        #[arg(long)]
        workload: Option<PathBuf>,
    },
    /// Closed-loop η sweep with gradient modulation.
    Modulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Comma-separated η grid.
        #[arg(long, allow_hyphen_values = true)]
        etas: Option<String>,
        #[arg(long)]
        runs_per_eta: Option<usize>,
    },
    /// Merge report tables from several run directories.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(required = true)]
        run_dirs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, alias = "method")]
    methods: Option<String>,
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let (name, result) = match cli.command {
        Command::Gen { common, count } => ("gen", commands::gen(&common, count)),
        Command::Train {
            common,
            manifest,
            method,
        } => ("train", commands::train(&common, manifest, method)),
        Command::EvalFuel(args) => ("eval-fuel", commands::eval(&args, fuelgauge::eval::Task::Fuel)),
        Command::EvalLength(args) => ("eval-length", commands::eval(&args, fuelgauge::eval::Task::Length)),
        Command::SimAlloc {
            common,
            manifest,
            policies,
            checkpoint_dir,
            workload,
        } => (
            "sim-alloc",
            commands::sim_alloc(&common, manifest, policies, checkpoint_dir, workload),
        ),
        Command::Modulate {
            common,
            checkpoint,
            etas,
            runs_per_eta,
        } => ("modulate", commands::modulate(&common, checkpoint, etas, runs_per_eta)),
        Command::Report { out_dir, run_dirs } => ("report", commands::report(&out_dir, &run_dirs)),
    };
    result.with_context(|| format!("{name} failed"))
}
