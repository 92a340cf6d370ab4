use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plasmanet::commands::{dispatch, Context};
use plasmanet::RunConfig;

#[derive(Parser)]
#[command(name = "plasmanet", version, about = "Neural-network Poisson surrogates for plasma simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// INI configuration file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate charge datasets with reference potentials.
    Dataset,
    /// One-shot Poisson solve writing potential, field and residual report.
    Solve,
    /// Train a network and write its checkpoint and history.
    Train,
    /// Metric tables and resolution sweeps for the configured backends.
    Eval,
    /// Coupled plasma-oscillation run.
    Oscillate,
    /// Coupled axisymmetric streamer run.
    Streamer,
    /// Wall-clock table across backends and grid sizes.
    Bench,
    /// Formula and empirical receptive field of the configured network.
    Rf,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Dataset => "dataset",
            Command::Solve => "solve",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Oscillate => "oscillate",
            Command::Streamer => "streamer",
            Command::Bench => "bench",
            Command::Rf => "rf",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    let config = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let mut config = match config {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    if let Some(s) = cli.seed {
        config.set_seed(s);
    }
    let mut ctx = Context::new(config, cli.out);
    match dispatch(cli.command.name(), &mut ctx, cli.config.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
