//! The `conditioning` subcommand: sweep the penalty weight and report the
//! condition number of the penalty Hessian along the penalty path.

use std::io::Write as _;
use std::path::PathBuf;

use anyhow::Context;
use clap::Args;
use serde::Serialize;

use ptctr::{make_example, penalty_conditioning, ConditioningRow, ExampleId, PenaltyConfig};

use crate::manifest::RunManifest;
use crate::{write_json_report, CliError};

/// Arguments of `ptctr conditioning`.
#[derive(Debug, Args)]
pub struct ConditioningArgs {
    /// Problem whose penalty Hessian is swept (`ex1` or `ex3`; these have
    /// smooth, globally defined Hessians).
    #[arg(long)]
    pub problem: String,

    /// Problem dimension (a multiple of the problem's block size).
    #[arg(long, default_value_t = 4)]
    pub n: usize,

    /// Comma-separated penalty weights, swept in the given order.
    #[arg(long, default_value = "1,10,100,1000,10000,100000,1000000")]
    pub sigmas: String,

    /// Directory for the CSV and JSON reports (created if missing). The CSV
    /// is always echoed to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// JSON report: manifest plus rows.
#[derive(Debug, Serialize)]
struct ConditioningReport<'a> {
    manifest: &'a RunManifest,
    rows: Vec<JsonRow>,
}

#[derive(Debug, Serialize)]
struct JsonRow {
    sigma: f64,
    kappa: f64,
}

/// Serializes rows as CSV (header row, `.` decimal, scientific notation).
pub fn write_conditioning_csv<W: std::io::Write>(
    rows: &[ConditioningRow],
    writer: W,
) -> anyhow::Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["sigma", "kappa"])?;
    for row in rows {
        out.write_record([format!("{:.6e}", row.sigma), format!("{:.9e}", row.kappa)])?;
    }
    out.flush()?;
    Ok(())
}

/// Entry point for `ptctr conditioning`. Returns the process exit code.
pub fn cmd_conditioning(args: &ConditioningArgs) -> Result<i32, CliError> {
    let id: ExampleId = args
        .problem
        .parse()
        .map_err(|e: ptctr::ProblemError| CliError::usage(e.to_string()))?;
    if !matches!(id, ExampleId::Ex1 | ExampleId::Ex3) {
        return Err(CliError::usage(format!(
            "conditioning supports ex1 and ex3 (smooth global Hessians), got {id}"
        )));
    }
    let sigmas: Vec<f64> = args
        .sigmas
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::usage(format!("bad sigma value {:?}", s.trim())))
        })
        .collect::<Result<_, _>>()?;
    if sigmas.is_empty() {
        return Err(CliError::usage("empty sigma list"));
    }
    if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(CliError::usage(format!(
            "penalty weights must be finite and non-negative, got {bad}"
        )));
    }

    let sorted = sigmas.windows(2).all(|pair| pair[0] <= pair[1]);
    if !sorted {
        eprintln!(
            "warning: sigma list is not sorted; rows keep the given order and the \
             monotonicity check is skipped"
        );
    }

    let problem = make_example(id, args.n).map_err(|e| CliError::usage(e.to_string()))?;
    let reduced = problem
        .reduce()
        .context("constraint preprocessing failed")
        .map_err(CliError::failure)?;
    let rows = penalty_conditioning(
        &problem,
        &reduced,
        problem.x0(),
        &sigmas,
        &PenaltyConfig::default(),
    )
    .map_err(|e| CliError::failure(anyhow::anyhow!("conditioning sweep failed: {e}")))?;

    if sorted {
        for pair in rows.windows(2) {
            if pair[1].kappa < pair[0].kappa {
                eprintln!(
                    "warning: kappa decreases from {:.6e} (sigma {:.3e}) to {:.6e} (sigma {:.3e}); \
                     growth is asymptotic, not pointwise",
                    pair[0].kappa, pair[0].sigma, pair[1].kappa, pair[1].sigma
                );
            }
        }
    }

    let mut manifest = RunManifest::new("conditioning");
    manifest.problems = vec![id.to_string()];
    manifest.dimensions = vec![args.n];

    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .map_err(CliError::failure)?;
        let csv_path = dir.join("conditioning.csv");
        let json_path = dir.join("conditioning.json");
        manifest.output_paths = vec![
            csv_path.display().to_string(),
            json_path.display().to_string(),
        ];

        let file = std::fs::File::create(&csv_path)
            .with_context(|| format!("creating {}", csv_path.display()))
            .map_err(CliError::failure)?;
        write_conditioning_csv(&rows, file).map_err(CliError::failure)?;
        let json_rows = rows
            .iter()
            .map(|r| JsonRow {
                sigma: r.sigma,
                kappa: r.kappa,
            })
            .collect();
        write_json_report(
            &json_path,
            &ConditioningReport {
                manifest: &manifest,
                rows: json_rows,
            },
        )?;
    }

    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    write_conditioning_csv(&rows, &mut lock).map_err(CliError::failure)?;
    lock.flush().ok();

    Ok(0)
}
