#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity, clippy::large_enum_variant)]

mod commands;
mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult, EXIT_CODE_HELP};

pub const OUT_ENV: &str = "MIGRANET_OUT";

/// Networks and migration: simulation, estimation, instruments and
/// spatial-equilibrium counterfactuals driven by one JSON config.
#[derive(Debug, Parser)]
#[command(name = "migranet", version, after_help = EXIT_CODE_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory [default: `out` in the config, else $MIGRANET_OUT].
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Write a synthetic data bundle (needs `dgp`).
    Simulate,
    /// Fit the requested specifications; writes estimates.csv.
    Estimate,
    /// First stages, Bartik exposures and survey amenities.
    Instrument,
    /// Calibrated baseline equilibrium; writes equilibrium.csv.
    Equilibrium,
    /// Counterfactual scenarios; writes report_<scenario>.csv.
    Counterfactual,
    /// Transition matrices, MWTP, wage elasticity and gravity tables.
    Report,
}

fn run(cli: Cli) -> CliResult<()> {
    let path = cli.config.ok_or_else(|| CliError::config("--config is required"))?;
    let cfg = RunConfig::load(&path, cli.seed)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::new(error::code::OTHER, format!("thread pool: {e}")))?;
    }
    let out = commands::resolve_out(cli.out, &cfg)?;
    let ctx = Ctx::new(cfg, out)?;
    match cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Estimate => commands::estimate(&ctx),
        Command::Instrument => commands::instrument(&ctx),
        Command::Equilibrium => commands::equilibrium_cmd(&ctx),
        Command::Counterfactual => commands::counterfactual(&ctx),
        Command::Report => commands::report(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::config(e.to_string().lines().next().unwrap_or_default().to_string());
            eprintln!("{}", err.to_line());
            return ExitCode::from(err.code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.code as u8)
        }
    }
}
