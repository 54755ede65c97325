use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mre_core::config::ExperimentConfig;
use mre_core::pipeline::{Stage, Workspace};
use mre_core::{Error, Result};

#[derive(Parser)]
#[command(name = "mre", version, about = "Model-form error estimation and rectification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment description (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Artifact directory; defaults to `output_dir` from the config, then `mre-out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Alternate nominal model or basis artifact for mesh transfer (predict only).
    #[arg(long)]
    basis: Option<PathBuf>,
    /// Overrides the global seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Truth responses, sensor records and the nominal modal basis.
    Simulate(Common),
    /// MAP hyperparameters and smoothed latent forces for each noise level.
    Infer(Common),
    /// Fits the state-to-latent-force network.
    TrainSurrogate(Common),
    /// Rectified response under the test excitation.
    Predict(Common),
    /// Collects everything into results_table.{json,csv}.
    Report(Common),
}

fn threads_from_env() -> Result<()> {
    let Ok(v) = std::env::var("MRE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("MRE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    let (stage, args) = match cli.command {
        Command::Simulate(a) => (Stage::Simulate, a),
        Command::Infer(a) => (Stage::Infer, a),
        Command::TrainSurrogate(a) => (Stage::TrainSurrogate, a),
        Command::Predict(a) => (Stage::Predict, a),
        Command::Report(a) => (Stage::Report, a),
    };
    let level = if args.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if args.basis.is_some() && stage != Stage::Predict {
        log::warn!("--basis only affects `predict`");
    }
    threads_from_env()?;
    let config = ExperimentConfig::load(&args.config)?;
    let ws = Workspace::new(config, args.out, args.seed)?;
    ws.run(stage, args.basis.as_deref())?;
    if stage == Stage::Report {
        println!("{}", ws.dir.join("results_table.csv").display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mre: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
