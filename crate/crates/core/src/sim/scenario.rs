use super::{Disturbance, Gimbal, NoiseModel, SimError, World};
use crate::camera::{CameraRig, Extrinsics, Intrinsics};
use crate::control::Gains;
use crate::dynamics::{RigidBodyState, RobotParams};
use crate::protocol::{ProtocolConfig, Topology};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// A complete closed-loop run, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub world: World,
    pub robots: Vec<RobotSpec>,
    #[serde(default)]
    pub topology: TopologySpec,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub disturbances: Vec<Disturbance>,
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotSpec {
    /// Initial world position, m.
    pub position: [f64; 3],
    /// Initial `[roll, pitch, yaw]`, rad.
    #[serde(default)]
    pub attitude: [f64; 3],
    /// Depth setpoint below the surface at `t = 0`, m.
    pub target_depth: f64,
    /// Later setpoint changes.
    #[serde(default)]
    pub setpoints: Vec<Setpoint>,
    #[serde(default)]
    pub params: RobotParams,
    #[serde(default)]
    pub gains: Gains,
    /// Pressure-sensor read noise, m.
    #[serde(default = "default_pressure_noise")]
    pub pressure_noise: f64,
    #[serde(default)]
    pub gimbal: Gimbal,
    #[serde(default)]
    pub camera: CameraSpec,
}

fn default_pressure_noise() -> f64 {
    0.001
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Setpoint {
    pub time: f64,
    pub depth: f64,
}

/// Pinhole camera; focal lengths and principal point in pixels, ranges in m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for CameraSpec {
    fn default() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            min_range: 0.05,
            max_range: 2.0,
        }
    }
}

impl CameraSpec {
    /// Rig with an identity pose; the run loop sets the pose every round.
    pub fn rig(&self) -> Result<CameraRig, SimError> {
        Ok(CameraRig::new(
            Intrinsics::pinhole(self.fx, self.fy, self.cx, self.cy)?,
            Extrinsics::identity(),
            self.width,
            self.height,
            self.min_range,
            self.max_range,
        )?)
    }
}

/// Communication graph over the robots, numbered in file order from 0.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TopologySpec {
    #[default]
    Complete,
    Path,
    Ring,
    Edges {
        edges: Vec<(usize, usize)>,
    },
    /// Erdos-Renyi graph redrawn until connected.
    Random {
        probability: f64,
        seed: u64,
    },
}

impl TopologySpec {
    pub fn build(&self, n: usize) -> Result<Topology, SimError> {
        Ok(match self {
            TopologySpec::Complete => Topology::complete(n)?,
            TopologySpec::Path => Topology::path(n)?,
            TopologySpec::Ring => Topology::ring(n)?,
            TopologySpec::Edges { edges } => Topology::new(n, edges)?,
            TopologySpec::Random { probability, seed } => {
                Topology::random_connected(n, *probability, &mut ChaCha8Rng::seed_from_u64(*seed))?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    /// Protocol rounds `T`.
    pub rounds: u64,
    /// Simulated time per round, s.
    #[serde(default = "default_round_period")]
    pub round_period: f64,
    #[serde(default = "default_control_period")]
    pub control_period: f64,
    #[serde(default = "default_physics_step")]
    pub physics_step: f64,
    #[serde(default)]
    pub checks: Checks,
}

fn default_round_period() -> f64 {
    0.5
}

fn default_control_period() -> f64 {
    0.01
}

fn default_physics_step() -> f64 {
    0.001
}

/// Pass/fail thresholds evaluated after a run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checks {
    /// Error (m) below which the team counts as converged; reported as the
    /// convergence round. Defaults to `max_relative_error` times the tank
    /// diagonal when that is set.
    #[serde(default)]
    pub convergence_tolerance: Option<f64>,
    /// Bound on every final estimate's error as a fraction of the tank
    /// diagonal.
    #[serde(default)]
    pub max_relative_error: Option<f64>,
    /// Robot 0 sees the target first and every other robot joins later.
    #[serde(default)]
    pub staged_joins: bool,
    #[serde(default)]
    pub recovery: Option<RecoveryCheck>,
    /// Bound on `|roll|` and `|pitch|` over the whole run, degrees.
    #[serde(default)]
    pub max_attitude_deg: Option<f64>,
}

/// After every push or setpoint change on `robot`, depth and attitude must
/// re-enter their bands within `max_time` and then stay there for `hold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryCheck {
    pub robot: usize,
    pub depth_band: f64,
    pub attitude_band_deg: f64,
    pub hold: f64,
    pub max_time: f64,
}

impl RobotSpec {
    pub fn initial_state(&self) -> RigidBodyState {
        RigidBodyState {
            attitude: Vector3::from(self.attitude),
            ..RigidBodyState::at_rest(Vector3::from(self.position))
        }
    }

    /// Depth setpoint in force at `time`.
    pub fn target_depth_at(&self, time: f64) -> f64 {
        self.setpoints
            .iter()
            .filter(|s| s.time <= time + TIME_EPS)
            .fold(self.target_depth, |_, s| s.depth)
    }
}

/// Slack when comparing scheduled times to step boundaries, s.
pub(crate) const TIME_EPS: f64 = 1e-9;

/// `a / b` when it is a whole number.
fn whole_ratio(a: f64, b: f64) -> Option<u64> {
    let r = a / b;
    let n = r.round();
    (n >= 1.0 && (r - n).abs() < 1e-9 * n.max(1.0)).then_some(n as u64)
}

impl RunSpec {
    pub fn control_steps_per_round(&self) -> u64 {
        whole_ratio(self.round_period, self.control_period).expect("validated")
    }

    pub fn physics_steps_per_control(&self) -> u64 {
        whole_ratio(self.control_period, self.physics_step).expect("validated")
    }

    /// Simulated time at the start of control step `index`.
    pub fn control_time(&self, index: u64) -> f64 {
        index as f64 * self.control_period
    }

    /// First control step at or after `time`.
    pub fn control_index(&self, time: f64) -> u64 {
        ((time / self.control_period) - TIME_EPS).ceil().max(0.0) as u64
    }

    pub fn duration(&self) -> f64 {
        self.rounds as f64 * self.round_period
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| SimError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.world.validate()?;
        if self.robots.is_empty() {
            return Err(SimError::Config("robots: at least one robot is required".into()));
        }
        for (i, r) in self.robots.iter().enumerate() {
            let bad = |m: String| Err(SimError::Config(format!("robots[{i}]: {m}")));
            r.params
                .validate()
                .or_else(|e| bad(e.to_string()))?;
            if !self.world.contains(&Vector3::from(r.position)) {
                return bad(format!("position {:?} is outside the tank", r.position));
            }
            if r.attitude[1].abs() >= std::f64::consts::FRAC_PI_2 || !r.attitude.iter().all(|a| a.is_finite()) {
                return bad(format!("attitude {:?} is not usable", r.attitude));
            }
            if !(r.pressure_noise >= 0.0 && r.pressure_noise.is_finite()) {
                return bad(format!("pressure noise {}", r.pressure_noise));
            }
            if !r.target_depth.is_finite() || r.setpoints.iter().any(|s| !s.depth.is_finite() || !s.time.is_finite()) {
                return bad("setpoints must be finite".into());
            }
            if r.setpoints.windows(2).any(|w| w[0].time > w[1].time) {
                return bad("setpoints must be in time order".into());
            }
            r.gimbal.validate().or_else(|e| bad(e.to_string()))?;
            if let Err(e) = r.camera.rig() {
                return bad(e.to_string());
            }
        }
        self.topology.build(self.robots.len())?;
        crate::protocol::StepSchedule::new(self.protocol.step.numerator)?;
        if !(0.0..1.0).contains(&self.protocol.drop_probability) {
            return Err(SimError::Config(format!(
                "protocol.drop_probability {} must lie in [0, 1)",
                self.protocol.drop_probability
            )));
        }
        self.noise.validate()?;
        for (k, d) in self.disturbances.iter().enumerate() {
            if d.robot >= self.robots.len() || !(d.time >= 0.0) {
                return Err(SimError::Config(format!(
                    "disturbances[{k}]: robot {} at time {} is not valid",
                    d.robot, d.time
                )));
            }
        }
        let run = &self.run;
        if !(run.physics_step > 0.0) || whole_ratio(run.control_period, run.physics_step).is_none() {
            return Err(SimError::Config("run: control_period must be a whole number of physics steps".into()));
        }
        if whole_ratio(run.round_period, run.control_period).is_none() {
            return Err(SimError::Config("run: round_period must be a whole number of control periods".into()));
        }
        if let Some(rc) = &run.checks.recovery {
            if rc.robot >= self.robots.len() {
                return Err(SimError::Config(format!("run.checks.recovery.robot {} does not exist", rc.robot)));
            }
        }
        Ok(())
    }
}
