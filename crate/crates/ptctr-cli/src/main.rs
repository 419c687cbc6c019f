//! `ptctr` — benchmark harness, conditioning diagnostic, and navigation
//! simulation driver for the continuation solver.
//!
//! Exit codes: `0` success, `1` convergence or runtime failure, `2` usage
//! error. Every JSON report embeds a [`manifest::RunManifest`]; replaying its
//! recorded `argv` reproduces numerically identical results.

mod bench;
mod conditioning;
mod manifest;
mod vin_cmd;

use std::path::Path;

use anyhow::Context;
use clap::{Parser, Subcommand};
use serde::Serialize;

use ptctr::SolverKind;

/// Exit code for usage errors, matching clap's own convention.
const EXIT_USAGE: i32 = 2;
/// Exit code for runs that completed but failed to converge, and for runtime
/// failures (I/O, solver breakdown).
const EXIT_FAILURE: i32 = 1;

/// An error that knows which exit code it deserves.
#[derive(Debug)]
pub enum CliError {
    /// The invocation itself was invalid.
    Usage(String),
    /// The run could not be completed.
    Failure(anyhow::Error),
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    fn failure(error: anyhow::Error) -> Self {
        CliError::Failure(error)
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(message) => write!(f, "usage error: {message}"),
            CliError::Failure(error) => write!(f, "error: {error:#}"),
        }
    }
}

/// Parses a comma-separated solver list, preserving order and rejecting
/// duplicates.
fn parse_solver_list(expr: &str) -> Result<Vec<SolverKind>, CliError> {
    let mut out = Vec::new();
    for term in expr.split(',') {
        let kind: SolverKind = term
            .trim()
            .parse()
            .map_err(|e: ptctr::VinError| CliError::usage(e.to_string()))?;
        if out.contains(&kind) {
            return Err(CliError::usage(format!("solver {kind} listed twice")));
        }
        out.push(kind);
    }
    if out.is_empty() {
        return Err(CliError::usage("empty solver list"));
    }
    Ok(out)
}

/// Builds the worker pool for independent (problem, solver) pairs. The
/// `PTCTR_MAX_WORKERS` environment variable caps the thread count; each
/// individual solve remains single-threaded either way.
fn worker_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("PTCTR_MAX_WORKERS") {
        let cap: usize = raw.parse().ok().filter(|&v| v >= 1).ok_or_else(|| {
            CliError::usage(format!(
                "PTCTR_MAX_WORKERS must be a positive integer, got {raw:?}"
            ))
        })?;
        builder = builder.num_threads(cap);
    }
    builder
        .build()
        .context("building worker pool")
        .map_err(CliError::failure)
}

/// Serializes a report as pretty JSON at `path`.
fn write_json_report<T: Serialize>(path: &Path, report: &T) -> Result<(), CliError> {
    let rendered = serde_json::to_string_pretty(report)
        .context("serializing JSON report")
        .map_err(CliError::failure)?;
    std::fs::write(path, rendered + "\n")
        .with_context(|| format!("writing {}", path.display()))
        .map_err(CliError::failure)
}

#[derive(Debug, Parser)]
#[command(
    name = "ptctr",
    about = "Continuation solver with trust-region time-stepping: benchmarks, \
             penalty conditioning sweeps, and visual-inertial localization runs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run benchmark problems with one or more solvers and write reports.
    Bench(bench::BenchArgs),
    /// Run a visual-inertial localization simulation.
    Vin(vin_cmd::VinArgs),
    /// Sweep the penalty weight and report the penalty Hessian's condition
    /// number (grows without bound as the weight does).
    Conditioning(conditioning::ConditioningArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Bench(args) => bench::cmd_bench(args),
        Command::Vin(args) => vin_cmd::cmd_vin(args),
        Command::Conditioning(args) => conditioning::cmd_conditioning(args),
    };
    match outcome {
        Ok(code) => std::process::exit(code),
        Err(error) => {
            eprintln!("{error}");
            std::process::exit(error.exit_code());
        }
    }
}
