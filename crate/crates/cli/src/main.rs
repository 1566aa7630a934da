use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ellipse_cbf_cli::{cmd_run, plotdata::cmd_plotdata, verify::cmd_verify, RunManifest};

#[derive(Parser)]
#[command(
    name = "ellipse-cbf",
    about = "Collision avoidance for elliptical agents: batch simulation, verification, plot data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario file and write trajectory/summary CSVs.
    Run {
        /// Scenario file (flat key/value sections).
        scenario: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the randomized verification suites and write verify_report.csv.
    Verify {
        /// Master seed; per-suite seeds derive from it deterministically.
        #[arg(long)]
        seed: u64,
        /// Trials per suite.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Extract plot-ready data from a trajectory CSV.
    Plotdata {
        /// trajectory.csv produced by `run` (scenario_resolved.csv must sit
        /// in the same directory).
        trajectory: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Snapshot times, comma separated (e.g. 0,0.8,2,4).
        #[arg(long, value_delimiter = ',', required = true)]
        snapshots: Vec<f64>,
    },
}

fn report(manifest: &RunManifest) {
    for file in &manifest.files {
        println!("wrote {}", file.display());
    }
    println!(
        "done in {:.3} s (exit status {})",
        manifest.wall.as_secs_f64(),
        manifest.exit_status
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out),
        Command::Verify { seed, trials, out } => cmd_verify(seed, trials as usize, &out),
        Command::Plotdata {
            trajectory,
            out,
            snapshots,
        } => cmd_plotdata(&trajectory, &out, &snapshots),
    };
    match result {
        Ok(manifest) => {
            report(&manifest);
            ExitCode::from(manifest.exit_status as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
