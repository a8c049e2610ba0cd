use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ccpr_cli::{run, CliError, Experiment, Format, RunOptions};

#[derive(Parser)]
#[command(
    name = "ccpr",
    version,
    about = "Thresholds, potentials, bounds and simulations for coded Poisson receivers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML, or JSON for a `.json` file).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key; dotted paths reach nested tables.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Write artifacts here instead of printing them.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Worker threads for the parallel sweeps.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Simulation seed (`simulate` only).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Coupled and potential thresholds, one row per degree.
    Threshold,
    /// G_s*, G_conv*, G_up*, energy gaps and potential profiles.
    Potential,
    /// Two-class stability region boundaries.
    Region,
    /// Outer-bound envelope checks.
    Bounds,
    /// Monte Carlo peeling against density evolution.
    Simulate,
    /// One density-evolution run.
    Evolve,
}

impl From<Command> for Experiment {
    fn from(c: Command) -> Self {
        match c {
            Command::Threshold => Experiment::Threshold,
            Command::Potential => Experiment::Potential,
            Command::Region => Experiment::Region,
            Command::Bounds => Experiment::Bounds,
            Command::Simulate => Experiment::Simulate,
            Command::Evolve => Experiment::Evolve,
        }
    }
}

fn set_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config(anyhow::anyhow!("--threads must be positive")));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(e.into()))?;
    #[cfg(not(feature = "parallel"))]
    eprintln!("warning: built without parallel support, ignoring --threads {n}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions {
        config: cli.config,
        overrides: cli.set,
        out: cli.out,
        format: cli.format,
        seed: cli.seed,
    };
    let result = cli
        .threads
        .map_or(Ok(()), set_threads)
        .and_then(|()| run(cli.command.into(), &opts));
    match result {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
