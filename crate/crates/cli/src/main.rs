//! `uwloc`: calibration, depth maps, protocol replays and closed-loop
//! scenarios from the command line.
//!
//! Exit codes: 0 when the command finished and every check it evaluated
//! passed, 1 when a check failed or the run itself failed, 2 for bad usage
//! or unusable input.

mod commands;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "uwloc", version, about = "Underwater multi-robot localization simulator")]
pub struct Cli {
    /// Override the master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the number of protocol rounds.
    #[arg(long, global = true)]
    rounds: Option<u64>,
    /// Print nothing but errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the ranging model to `rho_star,u_cm` samples.
    Calibrate {
        /// Calibration CSV. Omit with --synthetic.
        samples: Option<PathBuf>,
        /// Generate samples from a known model instead of reading a file.
        #[arg(long)]
        synthetic: bool,
        /// Depth noise (cm) for --synthetic.
        #[arg(long, default_value_t = 3.4285)]
        noise: f64,
        /// Fail (exit 1) when R^2 falls below this.
        #[arg(long)]
        min_r_squared: Option<f64>,
    },
    /// Range every block of a focus stack.
    Depthmap {
        /// Stack directory with `stack.idx`. Omit with --synthetic.
        stack: Option<PathBuf>,
        /// Ranging model JSON (as written by `calibrate`).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Block size in pixels.
        #[arg(long, default_value_t = 16)]
        block: usize,
        /// Render a stack of a flat textured scene at this distance (cm).
        #[arg(long)]
        synthetic: Option<f64>,
    },
    /// Run the consensus protocol over recorded measurements.
    ProtocolRun {
        /// Replay description (JSON).
        spec: PathBuf,
    },
    /// Hold one robot at a depth, optionally after a push.
    Hover {
        /// Depth setpoint, m.
        #[arg(long, default_value_t = 0.3)]
        depth: f64,
        /// Starting depth, m (defaults to the setpoint).
        #[arg(long)]
        start_depth: Option<f64>,
        /// Simulated time, s.
        #[arg(long, default_value_t = 10.0)]
        seconds: f64,
        /// Roll impulse (N m s) applied at --push-time.
        #[arg(long)]
        push_roll: Option<f64>,
        #[arg(long, default_value_t = 5.0)]
        push_time: f64,
    },
    /// Run a closed-loop scenario file.
    Scenario {
        /// Scenario description (JSON).
        file: PathBuf,
    },
    /// Recompute metrics and checks from a log directory.
    Report {
        /// Directory written by `scenario` or `hover`.
        dir: PathBuf,
    },
}

/// Bad input rather than a failed run; exits with 2.
#[derive(Debug)]
pub struct BadInput(pub String);

impl std::fmt::Display for BadInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BadInput {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<BadInput>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
