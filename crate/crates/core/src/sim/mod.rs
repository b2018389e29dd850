//! Closed-loop simulation of a robot team localizing one target.
//!
//! Each round of `round_period` seconds:
//!
//! 1. every robot's dynamics and depth/attitude controller advance,
//!    control step by control step, with scheduled pushes applied at the
//!    control step they fall on;
//! 2. each gimbal slews toward its robot's current target estimate;
//! 3. the valid set is every robot whose camera sees the target;
//! 4. those robots draw measurements;
//! 5. one consensus round runs.
//!
//! All randomness comes from per-robot, per-round streams derived from the
//! master seed, so the outcome does not depend on thread scheduling.

mod gimbal;
mod log;
mod measure;
mod replay;
mod report;
mod run;
mod scenario;
mod world;

pub use gimbal::{aim_gimbal, camera_extrinsics, pointing_angles, wrap_angle, Gimbal};
pub use log::{
    attitude_samples, read_report, write_logs, write_report_files, AttitudeSample, CONTROL_FILE, GIMBALS_FILE,
    MEASUREMENTS_FILE, REPORT_FILE, SCENARIO_FILE, STATES_FILE, SUMMARY_FILE, TRAJECTORY_FILE,
};
pub use measure::{measure, DepthOfFieldNoise, FocusPipeline, NoiseModel};
pub use replay::{ReplayOutcome, ReplaySpec};
pub use report::{build_report, recovery_time, CheckOutcome, EventKind, EventRecovery, Report, RoundMetrics};
pub use run::{run_scenario, run_scenario_with, ControlSample, RoundLog};
pub use scenario::{CameraSpec, Checks, RecoveryCheck, RobotSpec, RunSpec, Scenario, Setpoint, TopologySpec};
pub use world::{apply_disturbance, Disturbance, Impulse, World};

use crate::camera::CameraError;
use crate::control::ControlError;
use crate::dynamics::DynamicsError;
use crate::optics::OpticsError;
use crate::protocol::ProtocolError;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario: {0}")]
    Config(String),
    #[error("scenario schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: not found", .0.display())]
    MissingLog(PathBuf),
    #[error("{}:{line}: {reason}", path.display())]
    Log { path: PathBuf, line: u64, reason: String },
    #[error("round {round}: {source}")]
    InRound {
        round: u64,
        #[source]
        source: Box<SimError>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

/// Derives an independent generator seed for one (round, robot, stream)
/// triple so results do not depend on the order robots are processed in.
pub fn stream_seed(seed: u64, round: u64, robot: u64, stream: u64) -> u64 {
    let mut h = seed;
    for word in [round, robot, stream] {
        h = splitmix(h ^ splitmix(word));
    }
    h
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
