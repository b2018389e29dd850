use super::SimError;
use crate::camera::Extrinsics;
use crate::dynamics::RigidBodyState;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Two-axis camera mount. Pan turns about body Z (positive toward body +Y),
/// tilt about the panned Y axis (positive looks down). At zero pan and
/// tilt the camera looks along body +X, image X to the robot's right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gimbal {
    #[serde(default)]
    pub pan: f64,
    #[serde(default)]
    pub tilt: f64,
    /// Largest angle change per second on each axis, rad/s.
    #[serde(default = "default_slew")]
    pub slew: f64,
    /// Pivot position in the body frame, m.
    #[serde(default = "default_mount")]
    pub mount: [f64; 3],
    /// `|tilt|` never exceeds this, rad.
    #[serde(default = "default_tilt_limit")]
    pub tilt_limit: f64,
}

fn default_slew() -> f64 {
    2.0
}

fn default_mount() -> [f64; 3] {
    [0.0, 0.0, 0.05]
}

fn default_tilt_limit() -> f64 {
    FRAC_PI_2 - 0.01
}

impl Default for Gimbal {
    fn default() -> Self {
        Self {
            pan: 0.0,
            tilt: 0.0,
            slew: default_slew(),
            mount: default_mount(),
            tilt_limit: default_tilt_limit(),
        }
    }
}

impl Gimbal {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tilt_limit > 0.0 && self.tilt_limit < FRAC_PI_2) {
            return Err(SimError::Config(format!(
                "gimbal tilt limit {} must lie in (0, pi/2)",
                self.tilt_limit
            )));
        }
        if !(self.tilt.abs() <= self.tilt_limit) || !self.pan.is_finite() {
            return Err(SimError::Config(format!("gimbal pose {}, {} out of range", self.pan, self.tilt)));
        }
        if !(self.slew >= 0.0 && self.slew.is_finite()) {
            return Err(SimError::Config(format!("gimbal slew {} must be non-negative", self.slew)));
        }
        Ok(())
    }
}

/// Maps camera axes (X right, Y down, Z forward) to the gimbal frame.
const CAMERA_AXES: Matrix3<f64> = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// World pose of the camera on a robot.
pub fn camera_extrinsics(state: &RigidBodyState, gimbal: &Gimbal) -> Result<Extrinsics, SimError> {
    let body = state.rotation()?;
    let rotation = body * rot_z(gimbal.pan) * rot_y(gimbal.tilt) * CAMERA_AXES;
    let translation = state.position + body * Vector3::from(gimbal.mount);
    Ok(Extrinsics::new(rotation, translation)?)
}

/// Pan and tilt that point the optical axis at `target`.
pub fn pointing_angles(state: &RigidBodyState, gimbal: &Gimbal, target: &Vector3<f64>) -> Result<(f64, f64), SimError> {
    let body = state.rotation()?;
    let pivot = state.position + body * Vector3::from(gimbal.mount);
    let d = body.transpose() * (target - pivot);
    let pan = d.y.atan2(d.x);
    let tilt = (-d.z).atan2(d.x.hypot(d.y));
    Ok((pan, tilt))
}

/// Slews toward the target estimate by at most `slew * dt` per axis, the
/// short way round in pan, with tilt kept inside its limit.
pub fn aim_gimbal(
    gimbal: &Gimbal,
    state: &RigidBodyState,
    estimate: &Vector3<f64>,
    dt: f64,
) -> Result<Gimbal, SimError> {
    let (pan, tilt) = pointing_angles(state, gimbal, estimate)?;
    let tilt = tilt.clamp(-gimbal.tilt_limit, gimbal.tilt_limit);
    let max_step = gimbal.slew * dt;
    let dpan = wrap_angle(pan - gimbal.pan).clamp(-max_step, max_step);
    let dtilt = (tilt - gimbal.tilt).clamp(-max_step, max_step);
    Ok(Gimbal {
        pan: wrap_angle(gimbal.pan + dpan),
        tilt: gimbal.tilt + dtilt,
        ..*gimbal
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn level_at(p: Vector3<f64>) -> RigidBodyState {
        RigidBodyState::at_rest(p)
    }

    #[test]
    fn zero_pose_looks_forward() {
        let e = camera_extrinsics(&level_at(Vector3::zeros()), &Gimbal::default()).unwrap();
        let r = e.rotation();
        assert_relative_eq!(r * Vector3::z(), Vector3::x(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::x(), -Vector3::y(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::y(), -Vector3::z(), epsilon = 1e-15);
        assert_relative_eq!(*e.translation(), Vector3::new(0.0, 0.0, 0.05));
    }

    #[test]
    fn positive_tilt_looks_down() {
        let g = Gimbal {
            tilt: 0.3,
            ..Gimbal::default()
        };
        let e = camera_extrinsics(&level_at(Vector3::zeros()), &g).unwrap();
        assert!((e.rotation() * Vector3::z()).z < 0.0);
    }

    #[test]
    fn aimed_camera_stays_put() {
        let s = level_at(Vector3::new(0.2, 0.3, 0.4));
        let target = Vector3::new(0.9, 0.5, 0.05);
        let mut g = Gimbal::default();
        let (pan, tilt) = pointing_angles(&s, &g, &target).unwrap();
        g.pan = pan;
        g.tilt = tilt;
        let next = aim_gimbal(&g, &s, &target, 0.5).unwrap();
        assert_relative_eq!(next.pan, g.pan, epsilon = 1e-15);
        assert_relative_eq!(next.tilt, g.tilt, epsilon = 1e-15);
        let e = camera_extrinsics(&s, &g).unwrap();
        let axis = e.rotation() * Vector3::z();
        let to_target = (target - e.translation()).normalize();
        assert_relative_eq!(axis, to_target, epsilon = 1e-12);
    }

    #[test]
    fn tilt_clamps_for_target_overhead() {
        let s = level_at(Vector3::zeros());
        let g = Gimbal {
            slew: 100.0,
            ..Gimbal::default()
        };
        let next = aim_gimbal(&g, &s, &Vector3::new(0.0, 0.0, 1.0), 1.0).unwrap();
        assert_eq!(next.tilt, -g.tilt_limit);
    }

    #[test]
    fn pan_is_rate_limited() {
        let s = level_at(Vector3::zeros());
        let g = Gimbal {
            slew: 1.0,
            ..Gimbal::default()
        };
        let next = aim_gimbal(&g, &s, &Vector3::new(0.0, 1.0, 0.05), 0.1).unwrap();
        assert_relative_eq!(next.pan, 0.1, epsilon = 1e-15);
        assert_eq!(next.tilt, 0.0);
    }

    #[test]
    fn pan_takes_the_short_way() {
        let s = level_at(Vector3::zeros());
        let g = Gimbal {
            pan: 3.0,
            slew: 1.0,
            ..Gimbal::default()
        };
        // Target at pan -3.0: crossing +-pi is the short way.
        let target = Vector3::new((-3.0_f64).cos(), (-3.0_f64).sin(), 0.05);
        let next = aim_gimbal(&g, &s, &target, 0.1).unwrap();
        assert_relative_eq!(next.pan, wrap_angle(3.1), epsilon = 1e-12);
    }

    #[test]
    fn wrap_examples() {
        assert_relative_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_relative_eq!(wrap_angle(-PI / 2.0), -PI / 2.0);
        assert_relative_eq!(wrap_angle(2.0 * PI + 0.1), 0.1, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn converges_to_a_reachable_target(
            x in 0.0f64..1.5, y in 0.0f64..1.2, z in 0.0f64..0.3,
            pan in -3.0f64..3.0, yaw in -3.0f64..3.0,
        ) {
            let mut s = level_at(Vector3::new(0.75, 0.6, 0.5));
            s.attitude.z = yaw;
            let target = Vector3::new(x, y, z);
            let mut g = Gimbal { pan, ..Gimbal::default() };
            for _ in 0..20 {
                g = aim_gimbal(&g, &s, &target, 0.5).unwrap();
                prop_assert!(g.tilt.abs() <= g.tilt_limit);
            }
            let (p, t) = pointing_angles(&s, &g, &target).unwrap();
            prop_assert!(wrap_angle(p - g.pan).abs() < 1e-9 || t.abs() > g.tilt_limit - 1e-9);
        }
    }
}
