//! Depth and attitude from four corner pressure sensors, a PI controller on
//! the mixed readings, and allocation of its output to rotor speeds.
//!
//! The sensor readings `zeta` (depth, positive down) and the squared rotor
//! speeds are both mixed by the same matrix
//!
//! ```text
//!     [ 1  1  1  1 ]      mu = A * zeta      (4 * depth, roll, pitch)
//! A = [ 1  1 -1 -1 ]      U  = A * nu^2      (total, roll, pitch demand)
//!     [-1  1  1 -1 ]
//! ```
//!
//! The controller drives `mu` to `[4 z*, 0, 0]`. A robot that sits too deep
//! has `e_1 > 0` and gets more thrust; a robot rolled or pitched positive
//! gets a restoring differential.

use crate::dynamics::{DynamicsError, RigidBodyState, RobotParams, ThrusterCommand};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid controller parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Rows of `A`.
pub const MIXING: [[f64; 4]; 3] = [[1.0, 1.0, 1.0, 1.0], [1.0, 1.0, -1.0, -1.0], [-1.0, 1.0, 1.0, -1.0]];

/// Closes the allocation system; orthogonal to every row of [`MIXING`].
const NULL_ROW: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// `A * v`.
pub fn mix(v: &[f64; 4]) -> Vector3<f64> {
    Vector3::from_fn(|r, _| (0..4).map(|j| MIXING[r][j] * v[j]).sum())
}

/// Four pressure sensors rigidly mounted on the body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureArray {
    offsets: [Vector3<f64>; 4],
    surface: f64,
    noise: f64,
}

impl PressureArray {
    /// `offsets` are body-frame sensor positions and must sum to zero;
    /// `surface` is the world Z of the water surface; `noise` is the
    /// per-reading standard deviation, m.
    pub fn new(offsets: [Vector3<f64>; 4], surface: f64, noise: f64) -> Result<Self, ControlError> {
        let sum: Vector3<f64> = offsets.iter().sum();
        let scale = offsets.iter().map(|o| o.norm()).fold(0.0, f64::max);
        if !(sum.norm() <= 1e-12 * scale.max(1.0)) {
            return Err(ControlError::InvalidParameter(format!(
                "sensor offsets must be symmetric, they sum to {sum:?}"
            )));
        }
        if !(noise >= 0.0 && noise.is_finite()) || !surface.is_finite() {
            return Err(ControlError::InvalidParameter(format!(
                "surface {surface}, noise {noise}"
            )));
        }
        Ok(Self {
            offsets,
            surface,
            noise,
        })
    }

    /// Sensors at the four thruster corners, numbered like the thrusters.
    pub fn corners(a: f64, b: f64, surface: f64, noise: f64) -> Result<Self, ControlError> {
        Self::new(
            [
                Vector3::new(a, b, 0.0),
                Vector3::new(-a, b, 0.0),
                Vector3::new(-a, -b, 0.0),
                Vector3::new(a, -b, 0.0),
            ],
            surface,
            noise,
        )
    }

    pub fn offsets(&self) -> &[Vector3<f64>; 4] {
        &self.offsets
    }

    pub fn surface(&self) -> f64 {
        self.surface
    }
}

/// Depth below the surface of each sensor, with Gaussian read noise.
pub fn sense_pressure<R: Rng + ?Sized>(
    array: &PressureArray,
    state: &RigidBodyState,
    rng: &mut R,
) -> Result<[f64; 4], ControlError> {
    let r = state.rotation()?;
    let noise = Normal::new(0.0, array.noise).expect("noise checked at construction");
    let mut zeta = [0.0; 4];
    for (z, offset) in zeta.iter_mut().zip(&array.offsets) {
        let height = (state.position + r * offset).z;
        *z = array.surface - height;
        if array.noise > 0.0 {
            *z += noise.sample(rng);
        }
    }
    Ok(zeta)
}

/// Diagonal PI controller on `e = mu - [4 z*, 0, 0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PIController {
    kp: Vector3<f64>,
    ki: Vector3<f64>,
    target_depth: f64,
    windup: Vector3<f64>,
    accumulator: Vector3<f64>,
}

/// Gains in squared-rotor-speed units per metre of `mu`, for the depth,
/// roll and pitch channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gains {
    pub kp: [f64; 3],
    pub ki: [f64; 3],
}

impl Default for Gains {
    /// Placed for [`RobotParams::default`]: a triple closed-loop pole at
    /// -4 rad/s in depth and at -6 rad/s in roll and pitch.
    fn default() -> Self {
        Self {
            kp: [48_930.0, 57_340.0, 57_340.0],
            ki: [65_240.0, 114_680.0, 114_680.0],
        }
    }
}

impl PIController {
    /// The accumulator is clamped so that `|K_i * integral|` never exceeds
    /// twice the hover thrust demand `m g / K`.
    pub fn new(gains: Gains, target_depth: f64, params: &RobotParams) -> Result<Self, ControlError> {
        if !gains.kp.iter().chain(&gains.ki).all(|g| *g >= 0.0 && g.is_finite()) {
            return Err(ControlError::InvalidParameter(format!("gains must be non-negative: {gains:?}")));
        }
        if !target_depth.is_finite() {
            return Err(ControlError::InvalidParameter(format!("target depth {target_depth}")));
        }
        params.validate()?;
        let bound = 2.0 * params.hover_thrust_squared().abs();
        let windup = Vector3::from_fn(|i, _| if gains.ki[i] > 0.0 { bound / gains.ki[i] } else { f64::INFINITY });
        Ok(Self {
            kp: Vector3::from(gains.kp),
            ki: Vector3::from(gains.ki),
            target_depth,
            windup,
            accumulator: Vector3::zeros(),
        })
    }

    pub fn target_depth(&self) -> f64 {
        self.target_depth
    }

    /// Changes the depth setpoint without touching the integral.
    pub fn set_target_depth(&mut self, depth: f64) {
        self.target_depth = depth;
    }

    pub fn accumulator(&self) -> Vector3<f64> {
        self.accumulator
    }

    /// Per-channel bound on the accumulator.
    pub fn windup_bound(&self) -> Vector3<f64> {
        self.windup
    }

    pub fn error(&self, mu: &Vector3<f64>) -> Vector3<f64> {
        mu - Vector3::new(4.0 * self.target_depth, 0.0, 0.0)
    }

    /// `U = K_p e + K_i * integral(e)`.
    pub fn update(&mut self, mu: &Vector3<f64>, dt: f64) -> Result<Vector3<f64>, ControlError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ControlError::InvalidParameter(format!("dt = {dt}")));
        }
        let e = self.error(mu);
        self.accumulator += e * dt;
        for i in 0..3 {
            self.accumulator[i] = self.accumulator[i].clamp(-self.windup[i], self.windup[i]);
        }
        Ok(self.kp.component_mul(&e) + self.ki.component_mul(&self.accumulator))
    }
}

/// Rotor command plus whether any squared speed had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub command: ThrusterCommand,
    pub saturated: bool,
}

/// Solves for `nu^2` with `sum(nu^2) = m g / K + depth_channel`, the roll
/// and pitch rows of `A nu^2` equal to `attitude`, and
/// `nu1^2 - nu2^2 + nu3^2 - nu4^2 = 0`, then clamps to `[0, nu_max^2]`.
pub fn allocate(params: &RobotParams, attitude: [f64; 2], depth_channel: f64) -> Allocation {
    let rhs = [params.hover_thrust_squared() + depth_channel, attitude[0], attitude[1], 0.0];
    // The four rows are orthogonal with squared norm 4, so H^-1 = H^T / 4.
    let rows = [MIXING[0], MIXING[1], MIXING[2], NULL_ROW];
    let max_sq = params.max_speed * params.max_speed;
    let mut saturated = false;
    let speeds = std::array::from_fn(|j| {
        let q: f64 = (0..4).map(|r| rows[r][j] * rhs[r]).sum::<f64>() / 4.0;
        let clamped = if q.is_nan() { 0.0 } else { q.clamp(0.0, max_sq) };
        saturated |= clamped != q;
        clamped.sqrt().min(params.max_speed)
    });
    Allocation {
        command: ThrusterCommand::new(speeds, params).expect("speeds clamped into range"),
        saturated,
    }
}

/// Everything one control update produced, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub command: ThrusterCommand,
    pub zeta: [f64; 4],
    pub demand: Vector3<f64>,
    pub saturated: bool,
}

/// Sense, mix, run the PI law and allocate.
pub fn control_step<R: Rng + ?Sized>(
    controller: &mut PIController,
    array: &PressureArray,
    params: &RobotParams,
    state: &RigidBodyState,
    dt: f64,
    rng: &mut R,
) -> Result<ControlOutput, ControlError> {
    let zeta = sense_pressure(array, state, rng)?;
    let demand = controller.update(&mix(&zeta), dt)?;
    let Allocation { command, saturated } = allocate(params, [demand.y, demand.z], demand.x);
    Ok(ControlOutput {
        command,
        zeta,
        demand,
        saturated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rk4_step;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SURFACE: f64 = 0.6;

    fn array(noise: f64) -> PressureArray {
        let p = RobotParams::default();
        PressureArray::corners(p.arm_a, p.arm_b, SURFACE, noise).unwrap()
    }

    fn at_depth(depth: f64) -> RigidBodyState {
        RigidBodyState::at_rest(Vector3::new(0.5, 0.5, SURFACE - depth))
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0)
    }

    #[test]
    fn level_sensors_read_body_depth() {
        let zeta = sense_pressure(&array(0.0), &at_depth(0.3), &mut rng()).unwrap();
        for z in zeta {
            assert_relative_eq!(z, 0.3, epsilon = 1e-15);
        }
        assert_relative_eq!(mix(&zeta), Vector3::new(1.2, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn roll_lifts_the_left_sensors() {
        let mut s = at_depth(0.3);
        s.attitude.x = 0.1;
        let zeta = sense_pressure(&array(0.0), &s, &mut rng()).unwrap();
        let b = RobotParams::default().arm_b;
        // Sensors 1, 2 at +b rise by b sin(phi), 3, 4 sink by the same.
        assert_relative_eq!(zeta[0] + zeta[1] - zeta[2] - zeta[3], -4.0 * b * 0.1_f64.sin(), epsilon = 1e-15);
        assert_relative_eq!(zeta.iter().sum::<f64>(), 1.2, epsilon = 1e-15);
    }

    #[test]
    fn pitch_sinks_the_front_sensors() {
        let mut s = at_depth(0.3);
        s.attitude.y = 0.1;
        let zeta = sense_pressure(&array(0.0), &s, &mut rng()).unwrap();
        let a = RobotParams::default().arm_a;
        assert_relative_eq!(mix(&zeta).z, -4.0 * a * 0.1_f64.sin(), epsilon = 1e-15);
    }

    #[test]
    fn asymmetric_sensors_rejected() {
        let o = Vector3::new(1.0, 0.0, 0.0);
        assert!(PressureArray::new([o, o, -o, o], 0.0, 0.0).is_err());
        assert!(PressureArray::corners(0.1, 0.1, 0.0, -1.0).is_err());
    }

    fn controller(gains: Gains) -> PIController {
        PIController::new(gains, 0.3, &RobotParams::default()).unwrap()
    }

    #[test]
    fn pi_examples() {
        let mut c = controller(Gains::default());
        assert_eq!(c.update(&Vector3::new(1.2, 0.0, 0.0), 0.01).unwrap(), Vector3::zeros());

        let mut c = controller(Gains {
            kp: [2.0, 1.0, 1.0],
            ki: [0.0; 3],
        });
        let mu = Vector3::new(1.2 + 0.4, 0.0, 0.0);
        assert_relative_eq!(c.update(&mu, 0.01).unwrap(), Vector3::new(0.8, 0.0, 0.0), epsilon = 1e-15);

        let mut c = controller(Gains {
            kp: [0.0; 3],
            ki: [1.0; 3],
        });
        let e = Vector3::new(0.1, -0.2, 0.3);
        let mu = e + Vector3::new(1.2, 0.0, 0.0);
        c.update(&mu, 0.5).unwrap();
        assert_relative_eq!(c.update(&mu, 0.5).unwrap(), e, epsilon = 1e-15);
        assert!(c.update(&mu, 0.0).is_err());
    }

    #[test]
    fn allocation_examples() {
        let p = RobotParams::default();
        let hover = p.hover_thrust_squared() / 4.0;
        let a = allocate(&p, [0.0, 0.0], 0.0);
        assert!(!a.saturated);
        for q in a.command.squared() {
            assert_relative_eq!(q, hover, max_relative = 1e-12);
        }

        let eps = 50.0;
        let q = allocate(&p, [4.0 * eps, 0.0], 0.0).command.squared();
        assert_relative_eq!(q[0], hover + eps, max_relative = 1e-12);
        assert_relative_eq!(q[1], hover + eps, max_relative = 1e-12);
        assert_relative_eq!(q[2], hover - eps, max_relative = 1e-12);
        assert_relative_eq!(q[3], hover - eps, max_relative = 1e-12);

        let a = allocate(&p, [0.0, 0.0], -10.0 * p.hover_thrust_squared());
        assert!(a.saturated);
        assert_eq!(a.command.squared(), [0.0; 4]);
        let a = allocate(&p, [0.0, 0.0], 10.0 * p.hover_thrust_squared());
        assert!(a.saturated);
        assert_eq!(a.command.speeds(), [p.max_speed; 4]);
    }

    #[test]
    fn control_step_at_setpoint_hovers() {
        let p = RobotParams::default();
        let mut c = controller(Gains::default());
        let out = control_step(&mut c, &array(0.0), &p, &at_depth(0.3), 0.01, &mut rng()).unwrap();
        assert_eq!(out.command, allocate(&p, [0.0, 0.0], 0.0).command);
        assert!(!out.saturated);
    }

    #[test]
    fn shallow_robot_gets_less_thrust() {
        // Depth is positive down and thrust points up, so sinking needs less
        // total thrust than hovering.
        let p = RobotParams::default();
        let mut c = controller(Gains::default());
        let out = control_step(&mut c, &array(0.0), &p, &at_depth(0.2), 0.01, &mut rng()).unwrap();
        let total: f64 = out.command.squared().iter().sum();
        assert!(total < p.hover_thrust_squared());
        let q = out.command.squared();
        assert_relative_eq!(q[0] + q[1] - q[2] - q[3], 0.0, epsilon = 1e-9);
        assert_relative_eq!(-q[0] + q[1] + q[2] - q[3], 0.0, epsilon = 1e-9);

        let mut c = controller(Gains::default());
        let out = control_step(&mut c, &array(0.0), &p, &at_depth(0.4), 0.01, &mut rng()).unwrap();
        assert!(out.command.squared().iter().sum::<f64>() > p.hover_thrust_squared());
    }

    #[test]
    fn roll_is_opposed() {
        use crate::dynamics::derivatives;
        let p = RobotParams::default();
        for phi in [0.05, -0.05] {
            let mut c = controller(Gains::default());
            let mut s = at_depth(0.3);
            s.attitude.x = phi;
            let out = control_step(&mut c, &array(0.0), &p, &s, 0.01, &mut rng()).unwrap();
            let accel = derivatives(&p, &s, &out.command).unwrap().rates.x;
            assert!(accel * phi < 0.0, "phi {phi}, roll accel {accel}");
        }
        for theta in [0.05, -0.05] {
            let mut c = controller(Gains::default());
            let mut s = at_depth(0.3);
            s.attitude.y = theta;
            let out = control_step(&mut c, &array(0.0), &p, &s, 0.01, &mut rng()).unwrap();
            let accel = derivatives(&p, &s, &out.command).unwrap().rates.y;
            assert!(accel * theta < 0.0);
        }
    }

    /// Runs the closed loop with 1 ms physics and 10 ms control.
    fn closed_loop(s0: RigidBodyState, seconds: f64, noise: f64, seed: u64) -> Vec<RigidBodyState> {
        let p = RobotParams::default();
        let arr = array(noise);
        let mut c = controller(Gains::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = s0;
        let mut out = vec![s];
        for _ in 0..(seconds / 0.01).round() as usize {
            let cmd = control_step(&mut c, &arr, &p, &s, 0.01, &mut rng).unwrap().command;
            for _ in 0..10 {
                s = rk4_step(&p, &s, &cmd, 1e-3).unwrap();
            }
            out.push(s);
        }
        out
    }

    #[test]
    fn closed_loop_settles_from_offsets() {
        for (depth, phi, theta) in [(0.1, 0.0, 0.0), (0.5, 0.0, 0.0), (0.3, 0.1, -0.1), (0.25, -0.05, 0.08)] {
            let mut s0 = at_depth(depth);
            s0.attitude = Vector3::new(phi, theta, 0.0);
            let traj = closed_loop(s0, 10.0, 0.001, 1);
            for s in &traj[traj.len() - 100..] {
                assert!((SURFACE - s.position.z - 0.3).abs() < 5e-3, "depth {}", SURFACE - s.position.z);
                assert!(s.attitude.x.abs() < 0.5_f64.to_radians());
                assert!(s.attitude.y.abs() < 0.5_f64.to_radians());
            }
        }
    }

    #[test]
    fn same_seed_same_commands() {
        let s0 = at_depth(0.2);
        let a = closed_loop(s0, 1.0, 0.001, 9);
        let b = closed_loop(s0, 1.0, 0.001, 9);
        assert_eq!(a, b);
        assert_ne!(a, closed_loop(s0, 1.0, 0.001, 10));
    }

    proptest! {
        #[test]
        fn allocation_reproduces_demand(roll in -5e3f64..5e3, pitch in -5e3f64..5e3, depth in -5e3f64..5e3) {
            let p = RobotParams::default();
            let a = allocate(&p, [roll, pitch], depth);
            prop_assert!(!a.saturated);
            let q = a.command.squared();
            let u = mix(&q);
            prop_assert!((u.x - p.hover_thrust_squared() - depth).abs() < 1e-12 * 4e4);
            prop_assert!((u.y - roll).abs() < 1e-12 * 4e4);
            prop_assert!((u.z - pitch).abs() < 1e-12 * 4e4);
            prop_assert!((q[0] - q[1] + q[2] - q[3]).abs() < 1e-12 * 4e4);
        }

        #[test]
        fn mirrored_roll_swaps_sides(roll in 0.0f64..5e3, depth in -5e3f64..5e3) {
            let p = RobotParams::default();
            let q = allocate(&p, [roll, 0.0], depth).command.squared();
            let m = allocate(&p, [-roll, 0.0], depth).command.squared();
            prop_assert_eq!([q[0], q[1], q[2], q[3]], [m[3], m[2], m[1], m[0]]);
        }

        #[test]
        fn accumulator_stays_bounded(errs in prop::collection::vec(prop::array::uniform3(-1e3f64..1e3), 1..200)) {
            let mut c = controller(Gains::default());
            let bound = c.windup_bound();
            for e in errs {
                c.update(&Vector3::from(e), 0.05).unwrap();
                let acc = c.accumulator();
                prop_assert!((0..3).all(|i| acc[i].abs() <= bound[i]));
            }
        }
    }
}
