//! Command-line front end: scenario parsing, batch simulation with CSV
//! output, randomized verification suites, and plot-ready data extraction.
//!
//! Exit codes: 0 success, 2 validation error, 3 safety violation detected,
//! 4 numerical failure.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ellipse_cbf::sim::{run_resolved, SimLog};
use thiserror::Error;

pub mod csvfmt;
pub mod plotdata;
pub mod scenario;
pub mod trajectory;
pub mod verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SAFETY_VIOLATION: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad inputs: scenario parse/validation failures, schema mismatches.
    #[error("{0}")]
    Validation(String),
    /// Filesystem trouble.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => 1,
        }
    }
}

/// What a command produced: inputs, outputs, and how it went.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub exit_status: i32,
    pub wall: Duration,
}

impl RunManifest {
    fn new(scenario: Option<PathBuf>, out_dir: &Path) -> Self {
        Self {
            scenario,
            out_dir: out_dir.to_path_buf(),
            files: Vec::new(),
            exit_status: EXIT_OK,
            wall: Duration::ZERO,
        }
    }

    fn add(&mut self, path: PathBuf) {
        self.files.push(path);
    }
}

fn write_file(manifest: &mut RunManifest, name: &str, contents: &str) -> Result<(), CliError> {
    let path = manifest.out_dir.join(name);
    std::fs::write(&path, contents)?;
    manifest.add(path);
    Ok(())
}

/// Runs a scenario file and writes `trajectory.csv`, `summary.csv`, and
/// `scenario_resolved.csv` into the output directory.
///
/// The manifest's exit status is 0 on a clean run, 3 when the run logged a
/// loss of separation, and 4 when the filter aborted the run (partial output
/// still written).
pub fn cmd_run(scenario_path: &Path, out_dir: &Path) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let mut manifest = RunManifest::new(Some(scenario_path.to_path_buf()), out_dir);

    let text = std::fs::read_to_string(scenario_path).map_err(|e| {
        CliError::Validation(format!("cannot read {}: {e}", scenario_path.display()))
    })?;
    let config = scenario::parse(&text)
        .map_err(|e| CliError::Validation(format!("{}: {e}", scenario_path.display())))?;
    let resolved = config
        .resolve()
        .map_err(|e| CliError::Validation(format!("{}: {e}", scenario_path.display())))?;

    std::fs::create_dir_all(out_dir)?;
    let log: SimLog<f64> = match run_resolved(&resolved) {
        Ok(log) => log,
        Err(e) => return Err(CliError::Validation(e.to_string())),
    };

    write_file(
        &mut manifest,
        "trajectory.csv",
        &trajectory::write_trajectory(&log),
    )?;
    write_file(
        &mut manifest,
        "summary.csv",
        &trajectory::write_summary(&log),
    )?;
    write_file(
        &mut manifest,
        "scenario_resolved.csv",
        &scenario::write_resolved(&resolved),
    )?;

    manifest.exit_status = if let Some(abort) = &log.abort {
        eprintln!("run aborted at step {}: {}", abort.step, abort.error);
        EXIT_NUMERICAL
    } else if !log.violations.is_empty() {
        let first = &log.violations[0];
        eprintln!(
            "safety violation: agents {} and {} lost separation at step {}",
            first.i + 1,
            first.j + 1,
            first.step
        );
        EXIT_SAFETY_VIOLATION
    } else {
        EXIT_OK
    };
    manifest.wall = start.elapsed();
    Ok(manifest)
}
