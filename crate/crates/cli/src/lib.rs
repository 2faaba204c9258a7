//! Command-line driver: configuration, subcommand dispatch and exit codes.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Overrides, RunConfig};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "pairwalk", version, about = "Paired quantum walk simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize coins per axis and write them with residual diagnostics.
    Synth(CommonArgs),
    /// Synthesize coins and evolve the initial state.
    Evolve(CommonArgs),
    /// Measure empirical convergence orders against the reference solver.
    Converge(CommonArgs),
    /// Derive Dirac coefficients from a tetrad field, then evolve.
    Dirac(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the compute kernels.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Synth(a) | Command::Evolve(a) | Command::Converge(a) | Command::Dirac(a) => a,
        }
    }
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let a = command.args();
    let mut cfg = RunConfig::load(
        &a.config,
        Overrides {
            eps: a.eps,
            steps: a.steps,
            seed: a.seed,
        },
    )?;
    if let Some(out) = &a.out {
        cfg.out = out.clone();
    }
    match command {
        Command::Synth(_) => commands::cmd_synth(&cfg),
        Command::Evolve(_) => commands::cmd_evolve(&cfg),
        Command::Converge(_) => commands::cmd_converge(&cfg),
        Command::Dirac(_) => commands::cmd_dirac(&cfg),
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = match cli.command.args().threads {
        Some(0) => Err(CliError::Config("`--threads` must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli.command)),
            Err(e) => Err(CliError::Config(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
