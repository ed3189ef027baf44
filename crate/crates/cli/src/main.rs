//! `smjd`: batch front end for pricing, hedging and validation runs.
//!
//! Exit status: 0 success, 1 validation failure, 2 numerical failure or solver
//! disagreement, 3 I/O or configuration error.

mod artifacts;
mod commands;

use artifacts::Manifest;
use clap::{Parser, Subcommand};
use smjd_core::config::{MethodJson, RunConfig};
use smjd_core::{Error, ErrorKind};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser, Debug)]
#[command(name = "smjd", version, about = "Local risk minimization under regime-switching jump diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate transition rates and the no-arbitrage condition.
    Check(Common),
    /// Jump-measure integrals and coefficients at t = 0.
    Integrals(Common),
    /// Simulate asset paths to CSV.
    Simulate(Common),
    /// Price surface (ie, fd) or Monte Carlo estimate (mc-q, mc-p).
    Price {
        #[command(flatten)]
        common: Common,
        /// Overrides the method in the config.
        #[arg(long)]
        method: Option<MethodJson>,
    },
    /// Replay the hedge on simulated physical paths.
    HedgeBacktest(Common),
    /// Run every pricer at the starting point and compare.
    Xval(Common),
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

/// How a command finished when it did not raise an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// A validation check reported failure.
    Rejected,
    /// Solvers disagree beyond their tolerances.
    Disagreement,
}

impl Outcome {
    fn code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::Rejected => 1,
            Outcome::Disagreement => 2,
        }
    }
}

fn error_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Validation => 1,
        ErrorKind::Numerical => 2,
        ErrorKind::Io => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, common, method) = match &cli.command {
        Command::Check(c) => ("check", c, None),
        Command::Integrals(c) => ("integrals", c, None),
        Command::Simulate(c) => ("simulate", c, None),
        Command::Price { common, method } => ("price", common, *method),
        Command::HedgeBacktest(c) => ("hedge-backtest", c, None),
        Command::Xval(c) => ("xval", c, None),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot set up {n} worker threads: {e}");
            return ExitCode::from(3);
        }
    }
    let started = Instant::now();
    let loaded = match RunConfig::load(&common.config) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(error_code(&e));
        }
    };
    let out = common
        .out
        .clone()
        .or_else(|| loaded.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("error: cannot create output directory {}: {e}", out.display());
        return ExitCode::from(3);
    }
    let seed = common.seed.unwrap_or(loaded.run.seed);
    let mut manifest = Manifest::new(name, &loaded, seed, common.threads);
    let ctx = commands::Context {
        loaded: &loaded,
        out: &out,
        seed,
        method: method.unwrap_or(loaded.run.method),
    };
    let result = match &cli.command {
        Command::Check(_) => commands::check(&ctx, &mut manifest),
        Command::Integrals(_) => commands::integrals(&ctx, &mut manifest),
        Command::Simulate(_) => commands::simulate(&ctx, &mut manifest),
        Command::Price { .. } => commands::price(&ctx, &mut manifest),
        Command::HedgeBacktest(_) => commands::hedge_backtest(&ctx, &mut manifest),
        Command::Xval(_) => commands::xval(&ctx, &mut manifest),
    };
    let code = match &result {
        Ok(o) => o.code(),
        Err(e) => {
            eprintln!("error: {e}");
            manifest.error = Some(e.to_string());
            error_code(e)
        }
    };
    manifest.exit_code = code;
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    if let Err(e) = manifest.write(&out) {
        eprintln!("error: {e}");
        return ExitCode::from(3);
    }
    ExitCode::from(code)
}
