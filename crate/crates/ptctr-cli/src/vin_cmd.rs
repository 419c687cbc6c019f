//! The `vin` subcommand: run a localization simulation and report it.

use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use ptctr::vin::write_trajectory_csv;
use ptctr::{simulate, NoiseModel, SolveStatus, SolverKind, TrajectoryId, VinParams, VinSummary};

use crate::manifest::RunManifest;
use crate::{write_json_report, CliError};

/// Arguments of `ptctr vin`.
#[derive(Debug, Args)]
pub struct VinArgs {
    /// Trajectory to fly: 1, 2, or 3.
    #[arg(long)]
    pub trajectory: String,

    /// Number of frames (the first frame is the known start).
    #[arg(long, default_value_t = 7200)]
    pub frames: usize,

    /// Measurement noise: `on` or `off`.
    #[arg(long, default_value = "off")]
    pub noise: String,

    /// Noise seed (used only with --noise on).
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    /// Solver for the per-frame problems: `ptctr`, `penalty`, or `flow`.
    #[arg(long, default_value = "ptctr")]
    pub solver: String,

    /// Directory for the per-frame CSV and the JSON summary (created if
    /// missing). Without it the JSON summary goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Distribution of per-frame solver effort.
#[derive(Debug, Serialize)]
struct IterationStats {
    min: usize,
    max: usize,
    mean: f64,
}

/// JSON summary of a run.
#[derive(Debug, Serialize)]
struct VinJsonSummary<'a> {
    manifest: &'a RunManifest,
    trajectory: String,
    solver: String,
    frames: usize,
    noisy: bool,
    seed: Option<u64>,
    max_err_xy: f64,
    mean_err_xy: f64,
    total_iterations: usize,
    iteration_stats: IterationStats,
    converged_frames: usize,
    iteration_limit_frames: usize,
    failed_frames: usize,
    elapsed_seconds: f64,
}

fn json_summary<'a>(manifest: &'a RunManifest, summary: &VinSummary) -> VinJsonSummary<'a> {
    let iters: Vec<usize> = summary.estimates.iter().map(|e| e.iterations).collect();
    let count = |status: SolveStatus| {
        summary
            .estimates
            .iter()
            .filter(|e| e.status == status)
            .count()
    };
    VinJsonSummary {
        manifest,
        trajectory: summary.trajectory.to_string(),
        solver: summary.solver.to_string(),
        frames: summary.frames,
        noisy: summary.noisy,
        seed: summary.seed,
        max_err_xy: summary.max_err_xy,
        mean_err_xy: summary.mean_err_xy,
        total_iterations: summary.total_iterations,
        iteration_stats: IterationStats {
            min: iters.iter().copied().min().unwrap_or(0),
            max: iters.iter().copied().max().unwrap_or(0),
            mean: if iters.is_empty() {
                0.0
            } else {
                iters.iter().sum::<usize>() as f64 / iters.len() as f64
            },
        },
        converged_frames: count(SolveStatus::Converged),
        iteration_limit_frames: count(SolveStatus::IterationLimit),
        failed_frames: summary.failures,
        elapsed_seconds: summary.elapsed_seconds,
    }
}

/// Entry point for `ptctr vin`. Returns the process exit code.
pub fn cmd_vin(args: &VinArgs) -> Result<i32, CliError> {
    let trajectory: TrajectoryId = args
        .trajectory
        .parse()
        .map_err(|e: ptctr::VinError| CliError::usage(e.to_string()))?;
    let solver: SolverKind = args
        .solver
        .parse()
        .map_err(|e: ptctr::VinError| CliError::usage(e.to_string()))?;
    let noise = match args.noise.as_str() {
        "off" => None,
        "on" => Some(NoiseModel::new(args.seed)),
        other => {
            return Err(CliError::usage(format!(
                "--noise takes on or off, got {other:?}"
            )))
        }
    };

    let mut manifest = RunManifest::new("vin");
    manifest.problems = vec![trajectory.to_string()];
    manifest.dimensions = vec![args.frames];
    manifest.solvers = vec![solver.to_string()];
    manifest.seed = noise.as_ref().map(|_| args.seed);

    let params = VinParams {
        frames: args.frames,
        ..VinParams::default()
    };
    let summary =
        simulate(trajectory, &params, noise, solver).map_err(|e| CliError::usage(e.to_string()))?;

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::failure)?;
        let tag = match summary.seed {
            Some(seed) => format!("noisy_seed{seed}"),
            None => "clean".to_string(),
        };
        let csv_path = dir.join(format!("vin_{trajectory}_{solver}_{tag}.csv"));
        let json_path = dir.join(format!("vin_{trajectory}_{solver}_{tag}_summary.json"));
        manifest.output_paths = vec![
            csv_path.display().to_string(),
            json_path.display().to_string(),
        ];

        let file = std::fs::File::create(&csv_path)
            .with_context(|| format!("creating {}", csv_path.display()))
            .map_err(CliError::failure)?;
        write_trajectory_csv(&summary, file)
            .map_err(|e| CliError::failure(anyhow::anyhow!("writing trajectory csv: {e}")))?;
        write_json_report(&json_path, &json_summary(&manifest, &summary))?;
        println!(
            "{trajectory} {solver}: {} frames, max err {:.6e} m, {} failures, {:.3} s → {}",
            summary.frames,
            summary.max_err_xy,
            summary.failures,
            summary.elapsed_seconds,
            csv_path.display()
        );
    } else {
        let rendered = serde_json::to_string_pretty(&json_summary(&manifest, &summary))
            .context("serializing summary")
            .map_err(CliError::failure)?;
        println!("{rendered}");
    }

    // A run that completes is a success: dropped frames are carried forward
    // by design and reported in the summary.
    Ok(0)
}
