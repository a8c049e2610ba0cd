//! Config-driven experiments over the `ccpr` library: each subcommand reads
//! one config table, runs a computation and emits CSV tables or a JSON
//! document that embeds the resolved config.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use commands::{emit_potential_profile, LoadProfile};
pub use output::Output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0:#}")]
    Config(anyhow::Error),
    #[error("numeric failure: {0}")]
    Numeric(ccpr::Error),
    #[error("{0:#}")]
    Io(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

/// Malformed inputs caught by the library count as config errors; anything
/// raised mid-computation is a numeric failure.
impl From<ccpr::Error> for CliError {
    fn from(e: ccpr::Error) -> Self {
        use ccpr::Error::*;
        match e {
            InvalidDistribution(_) | InvalidModel(_) | InvalidSystem(_) | InvalidEnvelope(_) => {
                CliError::Config(e.into())
            }
            e => CliError::Numeric(e),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Threshold,
    Potential,
    Region,
    Bounds,
    Simulate,
    Evolve,
}

impl Experiment {
    /// Name recorded in artifacts and used for the JSON file.
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Threshold => "threshold-table",
            Experiment::Potential => "potential-report",
            Experiment::Region => "region-2d",
            Experiment::Bounds => "bounds-check",
            Experiment::Simulate => "simulate",
            Experiment::Evolve => "evolve",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: Option<PathBuf>,
    /// `key=value` overrides, applied in order after the config file.
    pub overrides: Vec<String>,
    /// Directory for the artifacts; stdout when absent.
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Shorthand for `--set seed=N`; only `simulate` takes a seed.
    pub seed: Option<u64>,
}

impl RunOptions {
    fn resolved_overrides(&self, experiment: Experiment) -> Result<Vec<String>, CliError> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            if experiment != Experiment::Simulate {
                return Err(CliError::Config(anyhow::anyhow!(
                    "--seed only applies to `simulate`, not `{}`",
                    experiment.name()
                )));
            }
            overrides.push(format!("seed={seed}"));
        }
        Ok(overrides)
    }
}

/// Loads and validates the config, then runs the experiment. Nothing is
/// written.
pub fn execute(experiment: Experiment, opts: &RunOptions) -> Result<Output, CliError> {
    let overrides = opts.resolved_overrides(experiment)?;
    let path = opts.config.as_deref();
    macro_rules! load {
        () => {
            config::load(path, &overrides).map_err(CliError::Config)?
        };
    }
    match experiment {
        Experiment::Threshold => commands::threshold(&load!()),
        Experiment::Potential => commands::potential(&load!()),
        Experiment::Region => commands::region(&load!()),
        Experiment::Bounds => commands::bounds(&load!()),
        Experiment::Simulate => commands::simulate(&load!()),
        Experiment::Evolve => commands::evolve(&load!()),
    }
}

/// [`execute`], then writes the artifacts to `opts.out` (returning their
/// paths) or prints them.
pub fn run(experiment: Experiment, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let output = execute(experiment, opts)?;
    match &opts.out {
        Some(dir) => output.write(dir, opts.format),
        None => {
            print!("{}", output.render(opts.format)?);
            Ok(Vec::new())
        }
    }
}
