//! `krein` - batch front door for the rank-one spectral toolkit.
//!
//! Parses a scenario file, dispatches the requested pipeline across the core
//! library, and emits machine-readable tables or plot-ready data.
//!
//! Exit codes: 0 success, 1 computational failure, 2 validation failure.
//! `KREIN_LOG` controls verbosity (standard env_logger filters).

mod commands;
mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use report::Format;
use scenario::Command;

#[derive(Parser)]
#[command(name = "krein", version, about = "rank-one perturbation toolkit for spectral measures")]
struct Cli {
    #[command(subcommand)]
    action: Action,
}

#[derive(Subcommand)]
enum Action {
    /// Run a scenario file through one of the pipelines.
    Run {
        /// Path to the scenario JSON file.
        #[arg(long)]
        scenario: PathBuf,
        /// Pipeline to dispatch.
        #[arg(long, value_enum)]
        command: Command,
        /// Output directory for the report files.
        #[arg(long)]
        out: PathBuf,
        /// Output format.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Quadrature tolerance recorded in the ledger.
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Worker threads for per-alpha fan-out.
        #[arg(long, default_value_t = 1)]
        threads: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("KREIN_LOG")).init();
    let cli = Cli::parse();
    match cli.action {
        Action::Run {
            scenario: path,
            command,
            out,
            format,
            tol,
            threads,
        } => {
            let scenario = match scenario::parse_scenario(&path, command) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("validation failure: {e}");
                    return ExitCode::from(2);
                }
            };
            if tol <= 0.0 {
                eprintln!("validation failure: --tol must be positive");
                return ExitCode::from(2);
            }
            let pool = match rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
            {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("validation failure: thread pool: {e}");
                    return ExitCode::from(2);
                }
            };
            let started = Instant::now();
            let results = pool.install(|| commands::run(&scenario, command));
            let results = match results {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("computational failure: {e}");
                    return ExitCode::from(1);
                }
            };
            log::info!(
                "scenario `{}` command `{}` computed in {:.3} s",
                scenario.name,
                command.name(),
                started.elapsed().as_secs_f64()
            );
            let tolerance_flags = results.tolerance_flags(tol);
            for flag in &tolerance_flags {
                log::warn!("{flag}");
            }
            let report = report::RunReport {
                scenario: scenario.name.clone(),
                command: command.name().to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                tolerances: report::tolerance_ledger(tol),
                tolerance_flags,
                results,
            };
            match report::emit(&report, format, &out) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("computational failure: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
