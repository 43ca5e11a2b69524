//! `seqsynth`: synthesize, analyse and check synthetic microdata from a
//! TOML run configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::Globals;
use crate::config::{Command, Loaded};

#[derive(Debug, Parser)]
#[command(
    name = "seqsynth",
    version,
    about = "Sequential conditional synthesis of tabular microdata"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, env = "SEQSYNTH_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, clap::Args)]
struct Target {
    /// Run configuration, as an alternative to --config.
    #[arg(value_name = "CONFIG")]
    path: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit the plan to observed data and write labelled synthetic replicates.
    Synth(Target),
    /// Fit a model to synthetic replicates and combine the estimates.
    Analyze(Target),
    /// Compare synthetic marginals and coefficients with the observed data.
    Compare(Target),
    /// Run a simulation study.
    Simulate(Target),
    /// Apply disclosure control to existing synthetic files.
    Sdc(Target),
}

impl Cmd {
    fn kind(&self) -> (Command, &Target) {
        match self {
            Cmd::Synth(t) => (Command::Synth, t),
            Cmd::Analyze(t) => (Command::Analyze, t),
            Cmd::Compare(t) => (Command::Compare, t),
            Cmd::Simulate(t) => (Command::Simulate, t),
            Cmd::Sdc(t) => (Command::Sdc, t),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let (command, target) = cli.command.kind();
    let path = match (&cli.config, &target.path) {
        (Some(_), Some(_)) => bail!("give the configuration once, either positionally or with --config"),
        (Some(p), None) | (None, Some(p)) => p,
        (None, None) => bail!("`{}` needs a configuration: --config PATH", command.name()),
    };
    let cfg = Loaded::read(path)?;
    let globals = Globals {
        out_dir: cli.out_dir.clone(),
        seed: cli.seed,
    };
    commands::run(command, &cfg, &globals)?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
