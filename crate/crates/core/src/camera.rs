//! Pinhole projection, its inverse for a known depth, and field-of-view
//! tests.
//!
//! Camera frame: Z forward along the optical axis, X right, Y down. Extrinsics
//! map camera-frame coordinates to world coordinates,
//! `x_world = R * x_cam + p`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("intrinsic matrix is singular or malformed: {0}")]
    BadIntrinsics(&'static str),
    #[error("rotation is not proper orthonormal (|R^T R - I| = {orthogonality_error:e}, det = {det})")]
    NotRotation { orthogonality_error: f64, det: f64 },
    #[error("point is behind the camera (z_c = {z})")]
    BehindCamera { z: f64 },
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("invalid rig: {0}")]
    BadRig(String),
}

const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl Intrinsics {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self, CameraError> {
        if matrix.row(2) != Matrix3::<f64>::identity().row(2) {
            return Err(CameraError::BadIntrinsics("last row must be [0, 0, 1]"));
        }
        if !(matrix.determinant().abs() > 1e-9) {
            return Err(CameraError::BadIntrinsics("|det| <= 1e-9"));
        }
        let inverse = matrix
            .try_inverse()
            .ok_or(CameraError::BadIntrinsics("not invertible"))?;
        Ok(Self { matrix, inverse })
    }

    /// Zero-skew intrinsics from focal lengths and principal point, in pixels.
    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        Self::new(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }
}

/// Camera pose in the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Extrinsics {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, CameraError> {
        let orthogonality_error = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        let det = rotation.determinant();
        if !(orthogonality_error <= ROTATION_TOLERANCE && (det - 1.0).abs() <= ROTATION_TOLERANCE) {
            return Err(CameraError::NotRotation {
                orthogonality_error,
                det,
            });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Pose after a further world-frame rigid motion `x -> R x + t`.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vector3<f64>) -> Result<Self, CameraError> {
        Self::new(rotation * self.rotation, rotation * self.translation + translation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraRig {
    pub intrinsics: Intrinsics,
    pub extrinsics: Extrinsics,
    pub width: u32,
    pub height: u32,
    pub min_range: f64,
    pub max_range: f64,
}

impl CameraRig {
    pub fn new(
        intrinsics: Intrinsics,
        extrinsics: Extrinsics,
        width: u32,
        height: u32,
        min_range: f64,
        max_range: f64,
    ) -> Result<Self, CameraError> {
        if width == 0 || height == 0 {
            return Err(CameraError::BadRig("image size must be positive".into()));
        }
        if !(min_range > 0.0 && min_range < max_range) {
            return Err(CameraError::BadRig(format!(
                "need 0 < min_range < max_range, got {min_range}..{max_range}"
            )));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
            min_range,
            max_range,
        })
    }

    pub fn with_extrinsics(&self, extrinsics: Extrinsics) -> Self {
        Self { extrinsics, ..*self }
    }

    /// World point in camera coordinates.
    pub fn to_camera(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.extrinsics.rotation.transpose() * (world - self.extrinsics.translation)
    }

    /// Pixel coordinates and camera-frame depth `z_c` of a world point.
    pub fn project(&self, world: &Vector3<f64>) -> Result<(PixelPoint, f64), CameraError> {
        let cam = self.to_camera(world);
        let z = cam.z;
        if !(z > 0.0) {
            return Err(CameraError::BehindCamera { z });
        }
        let p = self.intrinsics.matrix * cam / z;
        Ok((PixelPoint { x: p.x, y: p.y }, z))
    }

    /// World point at depth `depth` along the ray through `pixel`:
    /// `depth * R * K^-1 [x, y, 1]^T + p`.
    pub fn localize(&self, pixel: PixelPoint, depth: f64) -> Result<Vector3<f64>, CameraError> {
        if !(depth > 0.0) {
            return Err(CameraError::NonPositiveDepth(depth));
        }
        let ray = self.intrinsics.inverse * Vector3::new(pixel.x, pixel.y, 1.0);
        Ok(depth * (self.extrinsics.rotation * ray) + self.extrinsics.translation)
    }

    /// Whether a point projects inside the image and within the range band.
    pub fn in_view(&self, world: &Vector3<f64>) -> bool {
        match self.project(world) {
            Ok((px, z)) => {
                px.x >= 0.0
                    && px.x < self.width as f64
                    && px.y >= 0.0
                    && px.y < self.height as f64
                    && z >= self.min_range
                    && z <= self.max_range
            }
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn rig() -> CameraRig {
        CameraRig::new(
            Intrinsics::pinhole(100.0, 100.0, 50.0, 50.0).unwrap(),
            Extrinsics::identity(),
            100,
            100,
            0.1,
            10.0,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let (px, z) = rig().project(&Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!((px.x, px.y, z), (50.0, 50.0, 1.0));
    }

    #[test]
    fn off_axis_projection() {
        let (px, _) = rig().project(&Vector3::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(px.x, 60.0, epsilon = 1e-12);
        assert_relative_eq!(px.y, 50.0, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera() {
        assert!(matches!(
            rig().project(&Vector3::new(0.0, 0.0, -1.0)),
            Err(CameraError::BehindCamera { .. })
        ));
        assert!(!rig().in_view(&Vector3::new(0.0, 0.0, -1.0)));
    }

    #[test]
    fn localize_examples() {
        let r = rig();
        let p = r.localize(PixelPoint { x: 50.0, y: 50.0 }, 2.0).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 2.0));
        let p = r.localize(PixelPoint { x: 60.0, y: 50.0 }, 1.0).unwrap();
        assert_relative_eq!(p, Vector3::new(0.1, 0.0, 1.0), epsilon = 1e-12);
        assert_eq!(
            r.localize(PixelPoint { x: 1.0, y: 1.0 }, 0.0),
            Err(CameraError::NonPositiveDepth(0.0))
        );
    }

    #[test]
    fn field_of_view_edges() {
        let r = rig();
        assert!(r.in_view(&Vector3::new(0.0, 0.0, 5.0)));
        // Just outside the right border.
        let outside = r.localize(PixelPoint { x: 101.0, y: 50.0 }, 2.0).unwrap();
        assert!(!r.in_view(&outside));
        let edge = r.localize(PixelPoint { x: 100.0, y: 50.0 }, 2.0).unwrap();
        assert!(!r.in_view(&edge));
        let zero = r.localize(PixelPoint { x: 0.0, y: 0.0 }, 2.0).unwrap();
        assert!(r.in_view(&zero));
        // Range band.
        assert!(!r.in_view(&Vector3::new(0.0, 0.0, 0.05)));
        assert!(!r.in_view(&Vector3::new(0.0, 0.0, 11.0)));
    }

    #[test]
    fn validation() {
        assert!(Intrinsics::pinhole(0.0, 100.0, 1.0, 1.0).is_err());
        assert!(Intrinsics::new(Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.1, 0.0, 1.0)).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(
            Extrinsics::new(reflect, Vector3::zeros()),
            Err(CameraError::NotRotation { .. })
        ));
        let i = Intrinsics::pinhole(1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(CameraRig::new(i, Extrinsics::identity(), 0, 10, 0.1, 1.0).is_err());
        assert!(CameraRig::new(i, Extrinsics::identity(), 10, 10, 1.0, 1.0).is_err());
    }

    fn arb_rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (
            -1.0f64..1.0,
            -1.0f64..1.0,
            -1.0f64..1.0,
            -std::f64::consts::PI..std::f64::consts::PI,
        )
            .prop_filter_map("axis", |(x, y, z, a)| {
                let v = Vector3::new(x, y, z);
                (v.norm() > 1e-3).then(|| *Rotation3::from_axis_angle(&Unit::new_normalize(v), a).matrix())
            })
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    fn arb_rig() -> impl Strategy<Value = CameraRig> {
        (arb_rotation(), arb_vec(5.0), 50.0f64..2000.0, 0.5f64..2.0, 0.0f64..800.0, 0.0f64..600.0)
            .prop_map(|(r, t, fx, aspect, cx, cy)| {
                CameraRig::new(
                    Intrinsics::pinhole(fx, fx * aspect, cx, cy).unwrap(),
                    Extrinsics::new(r, t).unwrap(),
                    800,
                    600,
                    0.05,
                    20.0,
                )
                .unwrap()
            })
    }

    proptest! {
        #[test]
        fn project_localize_round_trip(rig in arb_rig(), cam in arb_vec(3.0), depth in 0.01f64..20.0) {
            let point = rig.extrinsics.rotation() * Vector3::new(cam.x, cam.y, depth) + rig.extrinsics.translation();
            let (px, z) = rig.project(&point).unwrap();
            let back = rig.localize(px, z).unwrap();
            let scale = point.norm().max(rig.extrinsics.translation().norm()).max(1.0);
            prop_assert!((back - point).norm() <= 1e-9 * scale);
        }

        #[test]
        fn localize_linear_in_depth(rig in arb_rig(), x in 0.0f64..800.0, y in 0.0f64..600.0, u in 0.01f64..10.0, k in 0.1f64..10.0) {
            let px = PixelPoint { x, y };
            let p = rig.extrinsics.translation();
            let a = rig.localize(px, u).unwrap() - p;
            let b = rig.localize(px, k * u).unwrap() - p;
            prop_assert!((b - k * a).norm() <= 1e-12 * b.norm().max(1.0));
        }

        #[test]
        fn in_view_rigid_invariance(rig in arb_rig(), point in arb_vec(10.0), r in arb_rotation(), t in arb_vec(5.0)) {
            let moved = rig.with_extrinsics(rig.extrinsics.transformed(&r, &t).unwrap());
            let p2 = r * point + t;
            let (a, b) = (rig.to_camera(&point), moved.to_camera(&p2));
            // Skip points sitting on a field-of-view boundary to rounding precision.
            let (px, _) = rig.project(&point).unwrap_or((PixelPoint { x: -1.0, y: -1.0 }, 0.0));
            let near_edge = [px.x, px.x - 800.0, px.y, px.y - 600.0, a.z - 0.05, a.z - 20.0, a.z]
                .iter()
                .any(|d| d.abs() < 1e-6);
            prop_assume!(!near_edge);
            prop_assert!((a - b).norm() < 1e-9 * a.norm().max(1.0));
            prop_assert_eq!(rig.in_view(&point), moved.in_view(&p2));
        }
    }
}
