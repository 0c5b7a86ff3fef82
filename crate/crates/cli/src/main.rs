//! `srbridge`: claims reserving, simulation and reinsurance pricing under a
//! stable-1/2 random bridge model of paid claims.

mod commands;
mod config;
mod error;
mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::Loaded;
use crate::error::{CliError, CliResult};
use crate::output::{Format, Sink};

#[derive(Parser)]
#[command(name = "srbridge", version, about = "Stable-1/2 random bridge claims reserving")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; tables go to stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Cross-check the analytic output against Monte Carlo (3 SE).
    #[arg(long, global = true)]
    mc_check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Best estimate, reserve, variance and quantiles per observation.
    Reserve,
    /// Simulate paid-claims paths from the latest observation.
    Simulate,
    /// Expected recoveries of aggregate excess-of-loss layers.
    Reinsure,
    /// Expected paid-claims level beyond thresholds.
    Cvar,
    /// Tail ratios of the ultimate loss and their limit.
    Tail,
    /// Two lines of business cut from one master bridge.
    Multiline,
    /// Run the acceptance suite.
    Selftest,
}

fn run(cli: Cli) -> CliResult<bool> {
    if let Command::Selftest = cli.command {
        return Ok(commands::selftest(cli.seed.unwrap_or(srbridge_selftest::DEFAULT_SEED)));
    }
    let path = cli.config.ok_or_else(|| CliError::config("--config is required"))?;
    let cfg = Loaded::read(&path)?;
    let seed = cli.seed.or(cfg.raw.seed).unwrap_or(0);
    let ctx = Ctx { cfg, seed, sink: Sink::new(cli.out, cli.format)?, mc_check: cli.mc_check };
    match cli.command {
        Command::Reserve => commands::reserve(&ctx),
        Command::Simulate => commands::simulate(&ctx),
        Command::Reinsure => commands::reinsure(&ctx),
        Command::Cvar => commands::cvar(&ctx),
        Command::Tail => commands::tail(&ctx),
        Command::Multiline => commands::multiline(&ctx),
        Command::Selftest => unreachable!(),
    }?;
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("{}", e.structured());
            ExitCode::from(e.exit_code())
        }
    }
}
