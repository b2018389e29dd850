//! Rigid-body model of one robot lifted by four vertical thrusters at the
//! corners of an `a x b` rectangle.
//!
//! World frame: X, Y horizontal, Z up. Body frame: X forward, Y left, Z up.
//! Thrusters sit at `T1 (+a, +b)`, `T2 (-a, +b)`, `T3 (-a, -b)` and
//! `T4 (+a, -b)`; each pushes along body Z with force `K * nu_j^2`.
//!
//! ```text
//! m * x''  + k_x x'|x'|  = K * sum(nu^2) * (cos(phi) sin(theta) cos(psi) + sin(phi) sin(psi))
//! m * y''  + k_y y'|y'|  = K * sum(nu^2) * (cos(phi) sin(theta) sin(psi) - sin(phi) cos(psi))
//! m * z''  + k_z z'|z'|  = K * sum(nu^2) * cos(phi) cos(theta) - m g
//! I_x phi''   = K b (nu1^2 + nu2^2 - nu3^2 - nu4^2) - (I_z - I_y) theta' psi'
//! I_y theta'' = K a (-nu1^2 + nu2^2 + nu3^2 - nu4^2) - (I_x - I_z) phi' psi'
//! I_z psi''   = -(I_y - I_x) phi' theta'
//! ```
//!
//! Optional extras on top of that: a buoyancy force that offsets weight and
//! linear damping on every translational and rotational axis. The Euler
//! rates are used directly in the rotational equations, which is accurate
//! near level attitude.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("invalid robot parameter: {0}")]
    InvalidParameter(String),
    #[error("pitch {pitch} rad is at the Euler-angle singularity")]
    GimbalLock { pitch: f64 },
    #[error("thruster {index} speed {speed} outside [0, {max}]")]
    CommandOutOfRange { index: usize, speed: f64, max: f64 },
    #[error("state is not finite")]
    NonFinite,
}

/// Pitch magnitudes closer than this to pi/2 are rejected.
pub const PITCH_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotParams {
    /// kg
    pub mass: f64,
    /// m/s^2
    pub gravity: f64,
    /// Quadratic drag `[k_x, k_y, k_z]`, kg/m.
    pub drag: [f64; 3],
    /// Thrust per squared rotor speed, N s^2.
    pub thrust_coefficient: f64,
    /// `[I_x, I_y, I_z]`, kg m^2.
    pub inertia: [f64; 3],
    /// Thruster lever arm along body X, m.
    pub arm_a: f64,
    /// Thruster lever arm along body Y, m.
    pub arm_b: f64,
    /// 1/s
    pub max_speed: f64,
    /// Net upward buoyant force, N.
    #[serde(default)]
    pub buoyancy: f64,
    /// Linear drag on `[x', y', z']`, N s/m.
    #[serde(default)]
    pub linear_damping: [f64; 3],
    /// Linear drag on `[phi', theta', psi']`, N m s.
    #[serde(default)]
    pub angular_damping: [f64; 3],
}

impl Default for RobotParams {
    /// A 3 kg desk-scale robot on a 0.3 m square frame, hovering at half
    /// of its maximum rotor speed.
    fn default() -> Self {
        let mass = 3.0;
        let gravity = 9.81;
        let max_speed = 200.0;
        let hover = 0.5 * max_speed;
        Self {
            mass,
            gravity,
            drag: [15.0, 15.0, 20.0],
            thrust_coefficient: mass * gravity / (4.0 * hover * hover),
            inertia: [0.0225, 0.0225, 0.045],
            arm_a: 0.12,
            arm_b: 0.12,
            max_speed,
            buoyancy: 0.0,
            linear_damping: [10.0, 10.0, 36.0],
            angular_damping: [0.405, 0.405, 0.1],
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |what: &str, v: f64| Err(DynamicsError::InvalidParameter(format!("{what} = {v}")));
        let positive = [
            ("mass", self.mass),
            ("thrust_coefficient", self.thrust_coefficient),
            ("inertia[0]", self.inertia[0]),
            ("inertia[1]", self.inertia[1]),
            ("inertia[2]", self.inertia[2]),
            ("arm_a", self.arm_a),
            ("arm_b", self.arm_b),
            ("max_speed", self.max_speed),
        ];
        for (what, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(what, v);
            }
        }
        let non_negative = [
            ("gravity", self.gravity),
            ("drag[0]", self.drag[0]),
            ("drag[1]", self.drag[1]),
            ("drag[2]", self.drag[2]),
            ("linear_damping[0]", self.linear_damping[0]),
            ("linear_damping[1]", self.linear_damping[1]),
            ("linear_damping[2]", self.linear_damping[2]),
            ("angular_damping[0]", self.angular_damping[0]),
            ("angular_damping[1]", self.angular_damping[1]),
            ("angular_damping[2]", self.angular_damping[2]),
        ];
        for (what, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(what, v);
            }
        }
        if !self.buoyancy.is_finite() {
            return bad("buoyancy", self.buoyancy);
        }
        Ok(())
    }

    /// Weight minus buoyancy, N.
    pub fn net_weight(&self) -> f64 {
        self.mass * self.gravity - self.buoyancy
    }

    /// `sum(nu_j^2)` that balances the net weight at level attitude.
    pub fn hover_thrust_squared(&self) -> f64 {
        self.net_weight() / self.thrust_coefficient
    }
}

/// Position, ZYX Euler attitude `[phi, theta, psi]`, linear velocity and
/// Euler rates. Also used for time derivatives of the same quantities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidBodyState {
    pub position: Vector3<f64>,
    pub attitude: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub rates: Vector3<f64>,
}

impl RigidBodyState {
    pub fn at_rest(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> SVector<f64, 12> {
        let mut v = SVector::<f64, 12>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.attitude);
        v.fixed_rows_mut::<3>(6).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(9).copy_from(&self.rates);
        v
    }

    pub fn from_vector(v: &SVector<f64, 12>) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into(),
            attitude: v.fixed_rows::<3>(3).into(),
            velocity: v.fixed_rows::<3>(6).into(),
            rates: v.fixed_rows::<3>(9).into(),
        }
    }

    pub fn rotation(&self) -> Result<Matrix3<f64>, DynamicsError> {
        rotation_matrix(&self.attitude)
    }
}

/// Rotor speeds `nu_1..nu_4`, 1/s.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrusterCommand {
    speeds: [f64; 4],
}

impl ThrusterCommand {
    pub fn new(speeds: [f64; 4], params: &RobotParams) -> Result<Self, DynamicsError> {
        for (index, &speed) in speeds.iter().enumerate() {
            if !(0.0..=params.max_speed).contains(&speed) {
                return Err(DynamicsError::CommandOutOfRange {
                    index,
                    speed,
                    max: params.max_speed,
                });
            }
        }
        Ok(Self { speeds })
    }

    pub fn off() -> Self {
        Self::default()
    }

    /// Equal speeds whose total thrust balances the net weight. Not clamped.
    pub fn hover(params: &RobotParams) -> Self {
        let s = (params.hover_thrust_squared() / 4.0).max(0.0).sqrt();
        Self { speeds: [s; 4] }
    }

    pub fn speeds(&self) -> [f64; 4] {
        self.speeds
    }

    pub fn squared(&self) -> [f64; 4] {
        self.speeds.map(|s| s * s)
    }
}

/// `R = Rz(psi) * Ry(theta) * Rx(phi)`, mapping body to world coordinates.
pub fn rotation_matrix(attitude: &Vector3<f64>) -> Result<Matrix3<f64>, DynamicsError> {
    let (phi, theta, psi) = (attitude.x, attitude.y, attitude.z);
    if !attitude.iter().all(|a| a.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    if theta.abs() >= FRAC_PI_2 - PITCH_MARGIN {
        return Err(DynamicsError::GimbalLock { pitch: theta });
    }
    let (sf, cf) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = psi.sin_cos();
    Ok(Matrix3::new(
        cp * ct,
        cp * st * sf - sp * cf,
        cp * st * cf + sp * sf,
        sp * ct,
        sp * st * sf + cp * cf,
        sp * st * cf - cp * sf,
        -st,
        ct * sf,
        ct * cf,
    ))
}

/// Time derivative of `state` under `command`.
pub fn derivatives(
    params: &RobotParams,
    state: &RigidBodyState,
    command: &ThrusterCommand,
) -> Result<RigidBodyState, DynamicsError> {
    let r = state.rotation()?;
    let [q1, q2, q3, q4] = command.squared();
    let k = params.thrust_coefficient;
    let thrust = k * (q1 + q2 + q3 + q4);

    let v = state.velocity;
    let drag = Vector3::from_fn(|i, _| {
        params.drag[i] * v[i] * v[i].abs() + params.linear_damping[i] * v[i]
    });
    let force = thrust * r.column(2) - Vector3::new(0.0, 0.0, params.net_weight()) - drag;

    let w = state.rates;
    let [ix, iy, iz] = params.inertia;
    let d = params.angular_damping;
    let roll = k * params.arm_b * (q1 + q2 - q3 - q4) - (iz - iy) * w.y * w.z - d[0] * w.x;
    let pitch = k * params.arm_a * (-q1 + q2 + q3 - q4) - (ix - iz) * w.x * w.z - d[1] * w.y;
    let yaw = -(iy - ix) * w.x * w.y - d[2] * w.z;

    Ok(RigidBodyState {
        position: v,
        attitude: w,
        velocity: force / params.mass,
        rates: Vector3::new(roll / ix, pitch / iy, yaw / iz),
    })
}

/// One classical fourth-order Runge-Kutta step with the command held fixed.
pub fn rk4_step(
    params: &RobotParams,
    state: &RigidBodyState,
    command: &ThrusterCommand,
    dt: f64,
) -> Result<RigidBodyState, DynamicsError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidParameter(format!("dt = {dt}")));
    }
    let f = |x: &SVector<f64, 12>| -> Result<SVector<f64, 12>, DynamicsError> {
        Ok(derivatives(params, &RigidBodyState::from_vector(x), command)?.to_vector())
    };
    let x = state.to_vector();
    let k1 = f(&x)?;
    let k2 = f(&(x + 0.5 * dt * k1))?;
    let k3 = f(&(x + 0.5 * dt * k2))?;
    let k4 = f(&(x + dt * k3))?;
    let next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if !next.iter().all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite);
    }
    let next = RigidBodyState::from_vector(&next);
    if next.attitude.y.abs() >= FRAC_PI_2 - PITCH_MARGIN {
        return Err(DynamicsError::GimbalLock {
            pitch: next.attitude.y,
        });
    }
    Ok(next)
}

/// Takes `steps` fixed RK4 steps of length `dt`.
pub fn integrate(
    params: &RobotParams,
    state: &RigidBodyState,
    command: &ThrusterCommand,
    dt: f64,
    steps: usize,
) -> Result<RigidBodyState, DynamicsError> {
    let mut s = *state;
    for _ in 0..steps {
        s = rk4_step(params, &s, command, dt)?;
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rx(a: f64) -> Matrix3<f64> {
        Matrix3::new(1.0, 0.0, 0.0, 0.0, a.cos(), -a.sin(), 0.0, a.sin(), a.cos())
    }
    fn ry(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), 0.0, a.sin(), 0.0, 1.0, 0.0, -a.sin(), 0.0, a.cos())
    }
    fn rz(a: f64) -> Matrix3<f64> {
        Matrix3::new(a.cos(), -a.sin(), 0.0, a.sin(), a.cos(), 0.0, 0.0, 0.0, 1.0)
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_matrix(&Vector3::zeros()).unwrap(), Matrix3::identity());
        let yaw = rotation_matrix(&Vector3::new(0.0, 0.0, FRAC_PI_2)).unwrap();
        assert_relative_eq!(yaw * Vector3::x(), Vector3::y(), epsilon = 1e-15);

        let (phi, theta, psi) = (0.1_f64, 0.2_f64, 0.3_f64);
        let r = rotation_matrix(&Vector3::new(phi, theta, psi)).unwrap();
        let col = Vector3::new(
            phi.cos() * theta.sin() * psi.cos() + phi.sin() * psi.sin(),
            phi.cos() * theta.sin() * psi.sin() - phi.sin() * psi.cos(),
            phi.cos() * theta.cos(),
        );
        assert_relative_eq!(r.column(2).into_owned(), col, epsilon = 1e-15);
        assert_relative_eq!(r, rz(psi) * ry(theta) * rx(phi), epsilon = 1e-15);
    }

    #[test]
    fn gimbal_lock_is_an_error() {
        assert!(matches!(
            rotation_matrix(&Vector3::new(0.0, FRAC_PI_2, 0.0)),
            Err(DynamicsError::GimbalLock { .. })
        ));
        assert!(rotation_matrix(&Vector3::new(0.0, -FRAC_PI_2, 0.0)).is_err());
        assert!(rotation_matrix(&Vector3::new(0.0, 1.5, 0.0)).is_ok());
    }

    #[test]
    fn hover_is_a_fixed_point() {
        let p = RobotParams::default();
        let s = RigidBodyState::at_rest(Vector3::new(0.3, 0.2, 0.4));
        let d = derivatives(&p, &s, &ThrusterCommand::hover(&p)).unwrap();
        assert_eq!(d, RigidBodyState::default());
        assert_eq!(rk4_step(&p, &s, &ThrusterCommand::hover(&p), 1e-3).unwrap(), s);
    }

    #[test]
    fn hover_with_buoyancy() {
        let p = RobotParams {
            buoyancy: 5.0,
            ..RobotParams::default()
        };
        let d = derivatives(&p, &RigidBodyState::default(), &ThrusterCommand::hover(&p)).unwrap();
        assert!(d.velocity.z.abs() < 1e-14);
    }

    #[test]
    fn free_fall_from_rest() {
        let p = RobotParams::default();
        let d = derivatives(&p, &RigidBodyState::default(), &ThrusterCommand::off()).unwrap();
        assert_eq!(d.velocity, Vector3::new(0.0, 0.0, -p.gravity));
        assert_eq!(d.rates, Vector3::zeros());
    }

    #[test]
    fn differential_thrust_rolls() {
        let p = RobotParams::default();
        let cmd = ThrusterCommand::new([110.0, 110.0, 90.0, 90.0], &p).unwrap();
        let d = derivatives(&p, &RigidBodyState::default(), &cmd).unwrap();
        let expected = p.thrust_coefficient * p.arm_b * (2.0 * 110.0 * 110.0 - 2.0 * 90.0 * 90.0) / p.inertia[0];
        assert!(d.rates.x > 0.0);
        assert_relative_eq!(d.rates.x, expected, max_relative = 1e-14);
        assert_eq!(d.rates.y, 0.0);
        assert_eq!(d.rates.z, 0.0);
    }

    #[test]
    fn command_bounds() {
        let p = RobotParams::default();
        assert!(ThrusterCommand::new([0.0, 0.0, 0.0, p.max_speed], &p).is_ok());
        assert!(matches!(
            ThrusterCommand::new([0.0, -1.0, 0.0, 0.0], &p),
            Err(DynamicsError::CommandOutOfRange { index: 1, .. })
        ));
        assert!(ThrusterCommand::new([0.0, 0.0, 0.0, p.max_speed + 1.0], &p).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(RobotParams::default().validate().is_ok());
        let bad = RobotParams {
            mass: 0.0,
            ..RobotParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = RobotParams {
            drag: [1.0, -1.0, 1.0],
            ..RobotParams::default()
        };
        assert!(bad.validate().is_err());
    }

    fn drag_free() -> RobotParams {
        RobotParams {
            drag: [0.0; 3],
            linear_damping: [0.0; 3],
            angular_damping: [0.0; 3],
            ..RobotParams::default()
        }
    }

    #[test]
    fn ballistic_fall_matches_closed_form() {
        let p = drag_free();
        let s = integrate(&p, &RigidBodyState::default(), &ThrusterCommand::off(), 1e-3, 100).unwrap();
        let t = 0.1;
        assert!((s.position.z + 0.5 * p.gravity * t * t).abs() <= 1e-8);
        assert!((s.velocity.z + p.gravity * t).abs() <= 1e-10);
    }

    /// Falling from rest against `k z'|z'|`: `z(t) = -(v_t^2 / g) ln cosh(g t / v_t)`.
    fn quadratic_drag_fall(p: &RobotParams, t: f64) -> f64 {
        let vt = (p.mass * p.gravity / p.drag[2]).sqrt();
        -(vt * vt / p.gravity) * (p.gravity * t / vt).cosh().ln()
    }

    #[test]
    fn fourth_order_convergence() {
        let p = RobotParams {
            drag: [0.0, 0.0, 20.0],
            linear_damping: [0.0; 3],
            ..RobotParams::default()
        };
        let t_end = 0.5;
        let err = |n: usize| {
            let s = integrate(&p, &RigidBodyState::default(), &ThrusterCommand::off(), t_end / n as f64, n).unwrap();
            (s.position.z - quadratic_drag_fall(&p, t_end)).abs()
        };
        let (e1, e2, e3) = (err(10), err(20), err(40));
        let slope1 = (e1 / e2).log2();
        let slope2 = (e2 / e3).log2();
        assert!((slope1 - 4.0).abs() < 0.2, "{slope1}");
        assert!((slope2 - 4.0).abs() < 0.2, "{slope2}");
    }

    #[test]
    fn richardson_self_convergence() {
        // No closed form: a tumbling, thrusting robot against a dt/16 reference.
        let p = RobotParams::default();
        let cmd = ThrusterCommand::new([120.0, 80.0, 95.0, 105.0], &p).unwrap();
        let s0 = RigidBodyState {
            position: Vector3::new(0.1, 0.2, 0.3),
            attitude: Vector3::new(0.1, -0.05, 0.3),
            velocity: Vector3::new(0.1, -0.2, 0.05),
            rates: Vector3::new(0.5, -0.3, 0.8),
        };
        let t_end = 0.4;
        let run = |n: usize| integrate(&p, &s0, &cmd, t_end / n as f64, n).unwrap().to_vector();
        let reference = run(320);
        let e_coarse = (run(20) - reference).norm();
        let e_fine = (run(40) - reference).norm();
        let ratio = e_coarse / e_fine;
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn rejects_bad_step() {
        let p = RobotParams::default();
        assert!(rk4_step(&p, &RigidBodyState::default(), &ThrusterCommand::off(), 0.0).is_err());
        assert!(rk4_step(&p, &RigidBodyState::default(), &ThrusterCommand::off(), f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn drag_dissipates_kinetic_energy(
            v in prop::array::uniform3(-2.0f64..2.0),
            w in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let p = RobotParams { gravity: 0.0, ..RobotParams::default() };
            let mut s = RigidBodyState {
                velocity: Vector3::from(v),
                rates: Vector3::from(w),
                ..RigidBodyState::default()
            };
            for _ in 0..50 {
                let e0 = s.velocity.norm_squared();
                s = rk4_step(&p, &s, &ThrusterCommand::off(), 1e-3).unwrap();
                prop_assert!(s.velocity.norm_squared() <= e0 * (1.0 + 1e-12));
            }
        }

        #[test]
        fn central_thrusters_make_no_yaw(
            q in prop::array::uniform4(0.0f64..200.0),
            att in prop::array::uniform3(-0.5f64..0.5),
            roll_rate in -2.0f64..2.0,
        ) {
            let p = drag_free();
            let cmd = ThrusterCommand::new(q, &p).unwrap();
            let s = RigidBodyState {
                attitude: Vector3::from(att),
                rates: Vector3::new(roll_rate, 0.0, 0.0),
                ..RigidBodyState::default()
            };
            prop_assert_eq!(derivatives(&p, &s, &cmd).unwrap().rates.z, 0.0);
        }

        #[test]
        fn state_vector_round_trip(x in prop::array::uniform12(-10.0f64..10.0)) {
            let v = SVector::<f64, 12>::from(x);
            prop_assert_eq!(RigidBodyState::from_vector(&v).to_vector(), v);
        }
    }
}
