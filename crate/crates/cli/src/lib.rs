//! Command-line orchestration for `alm-core`.
//!
//! `alm solve|sweep|curve|simulate|verify --config <file.toml>` reads a
//! [`RunConfig`](config::RunConfig), runs one command and writes
//! `<dir>/<stem>_<command>.csv`. The process exit code follows
//! [`CliError::exit_code`](error::CliError::exit_code).

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

use std::ffi::OsString;
use std::path::PathBuf;

use alm_core::claims::TruncationMode;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::CommandOutput;
use crate::config::{Overrides, RunConfig, StrategyFile};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "alm", version, about = "Optimal investment and underwriting for a CRRA insurer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the optimal underwriting ratio and portfolio.
    Solve(CommonArgs),
    /// Solve every (rho, eta) pair of the [sweep] section.
    Sweep(CommonArgs),
    /// Tabulate h(kappa) on the [curve] grid.
    Curve(CommonArgs),
    /// Simulate the optimal (or a given) strategy and summarize the ensemble.
    Simulate(StrategyArgs),
    /// Check optimality conditions, the budget identity and objective dominance.
    Verify(StrategyArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides [output].dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Simulation seed (overrides [sim].seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Claim-size truncation at the policy limit.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Look for a root below zero when h(0) < 0.
    #[arg(long)]
    pub allow_negative_kappa: bool,
}

#[derive(Debug, Clone, clap::Args)]
pub struct StrategyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// TOML file with `kappa`, `pi` and `consumption` overrides.
    #[arg(long)]
    pub strategy: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Atom,
    Restriction,
    Renormalized,
}

impl From<ModeArg> for TruncationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Atom => Self::Atom,
            ModeArg::Restriction => Self::Restriction,
            ModeArg::Renormalized => Self::Renormalized,
        }
    }
}

impl CommonArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            out: self.out.clone(),
            seed: self.seed,
            mode: self.mode.map(Into::into),
            allow_negative_kappa: self.allow_negative_kappa,
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn load_strategy(args: &StrategyArgs) -> Result<Option<StrategyFile>, CliError> {
    args.strategy.as_deref().map(StrategyFile::load).transpose()
}

/// Run one parsed command.
pub fn execute(cli: &Cli) -> Result<CommandOutput, CliError> {
    match &cli.command {
        Command::Solve(a) => commands::cmd_solve(&a.load()?),
        Command::Sweep(a) => commands::cmd_sweep(&a.load()?),
        Command::Curve(a) => commands::cmd_curve(&a.load()?),
        Command::Simulate(a) => {
            let file = load_strategy(a)?;
            commands::cmd_simulate(&a.common.load()?, file.as_ref())
        }
        Command::Verify(a) => {
            let file = load_strategy(a)?;
            commands::cmd_verify(&a.common.load()?, file.as_ref())
        }
    }
}

/// Parse `args`, run, print, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = execute(&cli).and_then(|out| {
        println!("{}", out.message.trim_end());
        for f in &out.files {
            eprintln!("wrote {}", f.display());
        }
        out.failure.map_or(Ok(()), Err)
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
