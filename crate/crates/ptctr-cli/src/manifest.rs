//! The run manifest embedded in every machine-readable report.
//!
//! A manifest records everything needed to replay a run: the subcommand, the
//! exact argument vector, the resolved problem/dimension/solver selections,
//! any solver-config overrides, the seed, and where the outputs went. Replaying
//! the recorded `argv` reproduces numerically identical results — all
//! randomness is seeded and each solve is deterministic.

use std::collections::BTreeMap;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

/// Reproducibility record serialized verbatim into every JSON report.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    /// Subcommand that produced the report (`bench`, `vin`, `conditioning`).
    pub command: String,
    /// The process argument vector, replayable as-is.
    pub argv: Vec<String>,
    /// Resolved problem identifiers (benchmark ids or a trajectory name).
    pub problems: Vec<String>,
    /// Resolved problem dimensions, parallel to `problems` where applicable.
    pub dimensions: Vec<usize>,
    /// Solvers the run was asked to use.
    pub solvers: Vec<String>,
    /// Non-default solver settings, as `flag = value` pairs.
    pub config_overrides: BTreeMap<String, String>,
    /// Noise seed, when the run draws random measurements.
    pub seed: Option<u64>,
    /// Files the run wrote (empty when reporting to stdout only).
    pub output_paths: Vec<String>,
    /// Wall-clock start of the run, UTC.
    pub timestamp_utc: String,
    /// The same instant as seconds since the Unix epoch.
    pub unix_timestamp_seconds: u64,
}

impl RunManifest {
    /// Captures the current process arguments and time for `command`.
    pub fn new(command: &str) -> Self {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            problems: Vec::new(),
            dimensions: Vec::new(),
            solvers: Vec::new(),
            config_overrides: BTreeMap::new(),
            seed: None,
            output_paths: Vec::new(),
            timestamp_utc: format_utc(now),
            unix_timestamp_seconds: now,
        }
    }
}

/// Formats seconds since the Unix epoch as `YYYY-MM-DDTHH:MM:SSZ`.
///
/// Uses the standard civil-from-days conversion so the binary needs no
/// calendar dependency.
fn format_utc(unix_seconds: u64) -> String {
    let days = (unix_seconds / 86_400) as i64;
    let secs_of_day = unix_seconds % 86_400;

    // Days since 1970-01-01 to civil date (proleptic Gregorian).
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let year = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = if month <= 2 { year + 1 } else { year };

    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        secs_of_day / 3600,
        (secs_of_day / 60) % 60,
        secs_of_day % 60
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn epoch_formatting_matches_known_instants() {
        assert_eq!(format_utc(0), "1970-01-01T00:00:00Z");
        assert_eq!(format_utc(951_782_400), "2000-02-29T00:00:00Z");
        assert_eq!(format_utc(1_755_216_000), "2025-08-15T00:00:00Z");
        assert_eq!(format_utc(1_786_838_399), "2026-08-15T23:59:59Z");
    }

    #[test]
    fn manifest_captures_the_command_and_argv() {
        let manifest = RunManifest::new("bench");
        assert_eq!(manifest.command, "bench");
        assert!(
            !manifest.argv.is_empty(),
            "test binaries still have argv[0]"
        );
        assert!(manifest.timestamp_utc.ends_with('Z'));
    }
}
