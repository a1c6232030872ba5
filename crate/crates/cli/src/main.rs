//! `pzo` — projected zeroth-order extremum-seeking simulator.
//!
//! Subcommands: `run` (single scenario), `sweep` (one parameter over a value
//! list), `compare` (co-simulate several algorithms on identical inputs),
//! `check` (validate without running). Exit codes: 0 success, 2 validation
//! error, 3 divergence, 4 I/O error.

mod commands;
mod svg;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "pzo", version, about = "Projected zeroth-order extremum-seeking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory, report, and plot files.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: scenario's, then $PZO_OUT_DIR, then ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the scenario once per value of one parameter; emit a summary CSV.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// One of: eps_a, eps_omega, eps_xi, eps_theta, tau_d.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. 0.04,0.02,0.01.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Co-simulate several algorithms on identical inputs and report
    /// pairwise closeness.
    Compare {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated algorithm names; default pairs the scenario's
        /// algorithm with its average/target flows.
        #[arg(long)]
        algorithms: Option<String>,
        #[arg(long)]
        out: Option<PathbufAlias>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Validate a scenario without running it.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

type PathbufAlias = PathBuf;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out, seed } => commands::cmd_run(config, out.as_deref(), *seed),
        Command::Sweep { config, param, values, out, seed, workers } => {
            let parsed: Result<Vec<f64>, _> =
                values.split(',').map(|v| v.trim().parse::<f64>()).collect();
            match parsed {
                Err(e) => Err(commands::CliError {
                    code: 2,
                    message: format!("bad --values list: {e}"),
                }),
                Ok(vals) if vals.is_empty() => Err(commands::CliError {
                    code: 2,
                    message: "empty --values list".into(),
                }),
                Ok(vals) => {
                    let workers = workers.unwrap_or_else(|| {
                        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
                    });
                    commands::cmd_sweep(config, param, &vals, out.as_deref(), *seed, workers)
                }
            }
        }
        Command::Compare { config, algorithms, out, seed } => {
            commands::cmd_compare(config, algorithms.as_deref(), out.as_deref(), *seed)
        }
        Command::Check { config } => commands::cmd_check(config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
