use super::SimError;
use crate::dynamics::{RigidBodyState, RobotParams};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Rectangular tank with its floor at `z = 0` and one corner at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct World {
    /// Tank extents along X, Y, Z, m.
    pub tank: [f64; 3],
    /// Height of the water surface above the floor, m.
    pub surface: f64,
    /// True target position `x*`, m.
    pub target: [f64; 3],
    #[serde(default = "yes")]
    pub static_target: bool,
    /// Constant drift of a non-static target, m/s.
    #[serde(default)]
    pub target_velocity: [f64; 3],
}

fn yes() -> bool {
    true
}

impl World {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(format!("world: {m}")));
        if !self.tank.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return bad(format!("tank extents must be positive, got {:?}", self.tank));
        }
        if !(self.surface > 0.0 && self.surface <= self.tank[2]) {
            return bad(format!("surface {} must lie in (0, {}]", self.surface, self.tank[2]));
        }
        if !self.contains(&Vector3::from(self.target)) {
            return bad(format!("target {:?} is outside the tank", self.target));
        }
        if self.static_target && self.target_velocity != [0.0; 3] {
            return bad("a static target cannot have a velocity".into());
        }
        if !self.target_velocity.iter().all(|v| v.is_finite()) {
            return bad("target velocity must be finite".into());
        }
        Ok(())
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= 0.0 && p[i] <= self.tank[i])
    }

    /// Length of the tank's space diagonal.
    pub fn diagonal(&self) -> f64 {
        Vector3::from(self.tank).norm()
    }

    pub fn target_at(&self, time: f64) -> Vector3<f64> {
        let x = Vector3::from(self.target);
        if self.static_target {
            x
        } else {
            x + time * Vector3::from(self.target_velocity)
        }
    }
}

/// An instantaneous push: a linear impulse in world axes (N s) and an
/// angular impulse about the body axes (N m s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impulse {
    #[serde(default)]
    pub force: [f64; 3],
    #[serde(default)]
    pub torque: [f64; 3],
}

/// A scheduled push on one robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// Simulated time, s.
    pub time: f64,
    pub robot: usize,
    #[serde(flatten)]
    pub impulse: Impulse,
}

/// Adds `J / m` to the velocity and `tau / I` to the Euler rates.
pub fn apply_disturbance(params: &RobotParams, state: &RigidBodyState, impulse: &Impulse) -> RigidBodyState {
    let mut s = *state;
    s.velocity += Vector3::from(impulse.force) / params.mass;
    s.rates += Vector3::from(impulse.torque).component_div(&Vector3::from(params.inertia));
    s
}
