use super::SimError;
use crate::camera::{CameraRig, PixelPoint};
use crate::exec::Execution;
use crate::optics::{
    depth_map_with, depth_of_field, simulate_focus_stack_with, DefocusScene, DofParams, GrayImage, RangingModel,
    ThinLens,
};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// How a robot that sees the target turns that into a position reading.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Per-axis standard deviation of the reading, m.
    #[serde(default)]
    pub sigma: f64,
    /// Master seed for every random stream in a run.
    #[serde(default)]
    pub seed: u64,
    /// Widens the noise along the optical axis by half the depth of field.
    #[serde(default)]
    pub depth_of_field: Option<DepthOfFieldNoise>,
    /// Replaces the Gaussian shortcut with a rendered focus sweep.
    #[serde(default)]
    pub pipeline: Option<FocusPipeline>,
}

/// Ranging model and sensor used to size the depth-of-field band. Optics
/// quantities are in centimetres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DepthOfFieldNoise {
    pub model: RangingModel,
    pub dof: DofParams,
}

/// A focus sweep rendered for every reading: a random texture at the
/// target's range is blurred at `frames` motor positions spanning
/// `[near, far]` (m), and its clarity peak is ranged with `model`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FocusPipeline {
    pub model: RangingModel,
    pub dof: DofParams,
    pub blur_scale: f64,
    pub near: f64,
    pub far: f64,
    pub frames: usize,
    #[serde(default = "default_patch")]
    pub patch: usize,
}

fn default_patch() -> usize {
    16
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SimError::Config(format!("noise sigma {} must be non-negative", self.sigma)));
        }
        if let Some(d) = &self.depth_of_field {
            RangingModel::new(d.model.kappa, d.model.focal, d.model.offset)?;
            DofParams::new(d.dof.aperture, d.dof.pixel_pitch)?;
        }
        if let Some(p) = &self.pipeline {
            p.positions()?;
            DofParams::new(p.dof.aperture, p.dof.pixel_pitch)?;
            if p.patch < 3 || !(p.blur_scale >= 0.0) {
                return Err(SimError::Config("pipeline patch must be >= 3 and blur_scale >= 0".into()));
            }
        }
        Ok(())
    }
}

impl FocusPipeline {
    /// Motor positions evenly spaced between the far and near focus limits.
    pub fn positions(&self) -> Result<Vec<f64>, SimError> {
        RangingModel::new(self.model.kappa, self.model.focal, self.model.offset)?;
        if self.frames < 3 || !(self.near > 0.0 && self.near < self.far) {
            return Err(SimError::Config(format!(
                "pipeline needs >= 3 frames and 0 < near < far, got {} frames over {}..{}",
                self.frames, self.near, self.far
            )));
        }
        let lo = self.model.motor_position(100.0 * self.far)?;
        let hi = self.model.motor_position(100.0 * self.near)?;
        let n = self.frames - 1;
        Ok((0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect())
    }

    /// Range along the optical axis (m) recovered from a rendered sweep of a
    /// flat patch at `range`, or `None` when the peak cannot be ranged.
    pub fn range<R: Rng + ?Sized>(&self, range: f64, rng: &mut R) -> Result<Option<f64>, SimError> {
        let positions = self.positions()?;
        let texture = GrayImage::from_fn(self.patch, self.patch, |_, _| rng.random::<f64>() * 255.0)?;
        let scene = DefocusScene::uniform(texture, 100.0 * range)?;
        let stack = simulate_focus_stack_with(
            Execution::Sequential,
            &scene,
            ThinLens::new(self.model.focal)?,
            self.dof,
            &self.model,
            &positions,
            self.blur_scale,
        )?;
        let map = depth_map_with(Execution::Sequential, &stack, &self.model, self.patch);
        Ok(map.cells[0].depth().map(|u| u / 100.0))
    }
}

/// One reading of the target, or `None` when the camera cannot see it.
pub fn measure<R: Rng + ?Sized>(
    target: &Vector3<f64>,
    rig: &CameraRig,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Option<Vector3<f64>>, SimError> {
    if !rig.in_view(target) {
        return Ok(None);
    }
    if let Some(pipeline) = &noise.pipeline {
        let (pixel, z) = rig.project(target)?;
        let pixel = PixelPoint {
            x: pixel.x.floor() + 0.5,
            y: pixel.y.floor() + 0.5,
        };
        return match pipeline.range(z, rng)? {
            Some(range) if range > 0.0 => Ok(Some(rig.localize(pixel, range)?)),
            _ => Ok(None),
        };
    }
    let normal = |s: f64| Normal::new(0.0, s).map_err(|e| SimError::Config(e.to_string()));
    let lateral = normal(noise.sigma)?;
    let delta = match &noise.depth_of_field {
        None => Vector3::from_fn(|_, _| lateral.sample(rng)),
        Some(d) => {
            let z = rig.to_camera(target).z;
            let u = 100.0 * z - d.model.offset;
            let half = match depth_of_field(ThinLens::new(d.model.focal)?, d.dof, u.max(d.model.focal)) {
                Ok(l) => 0.5 * l / 100.0,
                Err(_) => f64::INFINITY,
            };
            let axial = normal(noise.sigma.hypot(half))?;
            let local = Vector3::new(lateral.sample(rng), lateral.sample(rng), axial.sample(rng));
            rig.extrinsics.rotation() * local
        }
    };
    Ok(Some(target + delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{Extrinsics, Intrinsics};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rig() -> CameraRig {
        CameraRig::new(
            Intrinsics::pinhole(500.0, 500.0, 320.0, 240.0).unwrap(),
            Extrinsics::identity(),
            640,
            480,
            0.05,
            2.0,
        )
        .unwrap()
    }

    fn noise(sigma: f64) -> NoiseModel {
        NoiseModel {
            sigma,
            ..NoiseModel::default()
        }
    }

    #[test]
    fn exact_without_noise() {
        let x = Vector3::new(0.1, -0.05, 0.8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(measure(&x, &rig(), &noise(0.0), &mut rng).unwrap(), Some(x));
    }

    #[test]
    fn absent_when_out_of_view() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let behind = Vector3::new(0.0, 0.0, -1.0);
        assert_eq!(measure(&behind, &rig(), &noise(0.01), &mut rng).unwrap(), None);
        let far = Vector3::new(0.0, 0.0, 3.0);
        assert_eq!(measure(&far, &rig(), &noise(0.01), &mut rng).unwrap(), None);
    }

    #[test]
    fn noise_statistics() {
        let x = Vector3::new(0.1, -0.05, 0.8);
        let sigma = 0.002;
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let draws: Vec<Vector3<f64>> =
            (0..n).map(|_| measure(&x, &rig(), &noise(sigma), &mut rng).unwrap().unwrap()).collect();
        let mean = draws.iter().sum::<Vector3<f64>>() / n as f64;
        for k in 0..3 {
            assert!((mean[k] - x[k]).abs() < 3.0 * sigma / 100.0);
            let var = draws.iter().map(|d| (d[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var.sqrt() / sigma - 1.0).abs() < 0.05);
        }
    }

    fn ranging() -> RangingModel {
        RangingModel::new(0.3922, 0.7431, 0.7577).unwrap()
    }

    #[test]
    fn depth_of_field_widens_the_optical_axis() {
        let x = Vector3::new(0.0, 0.0, 0.8);
        let model = NoiseModel {
            sigma: 0.001,
            depth_of_field: Some(DepthOfFieldNoise {
                model: ranging(),
                dof: DofParams::new(2.0, 1e-4).unwrap(),
            }),
            ..NoiseModel::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws: Vec<Vector3<f64>> =
            (0..4000).map(|_| measure(&x, &rig(), &model, &mut rng).unwrap().unwrap()).collect();
        let std = |k: usize| (draws.iter().map(|d| (d[k] - x[k]).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
        let u = 80.0 - 0.7577;
        let half = 0.5 * depth_of_field(ThinLens::new(0.7431).unwrap(), DofParams::new(2.0, 1e-4).unwrap(), u).unwrap() / 100.0;
        let expected = 0.001_f64.hypot(half);
        assert!((std(2) / expected - 1.0).abs() < 0.06, "{} vs {}", std(2), expected);
        assert!((std(0) / 0.001 - 1.0).abs() < 0.06);
    }

    #[test]
    fn rendered_sweep_ranges_the_target() {
        let x = Vector3::new(0.02, 0.01, 0.6);
        let model = NoiseModel {
            pipeline: Some(FocusPipeline {
                model: ranging(),
                dof: DofParams::new(2.0, 1e-4).unwrap(),
                blur_scale: 600.0,
                near: 0.3,
                far: 1.2,
                frames: 40,
                patch: 16,
            }),
            ..NoiseModel::default()
        };
        model.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let got = measure(&x, &rig(), &model, &mut rng).unwrap().unwrap();
        assert!((got - x).norm() < 0.03, "{got:?}");
    }

    #[test]
    fn pipeline_positions_are_increasing() {
        let p = FocusPipeline {
            model: ranging(),
            dof: DofParams::new(2.0, 1e-4).unwrap(),
            blur_scale: 600.0,
            near: 0.3,
            far: 1.2,
            frames: 5,
            patch: 16,
        };
        let pos = p.positions().unwrap();
        assert_eq!(pos.len(), 5);
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(FocusPipeline { frames: 2, ..p }.positions().is_err());
    }
}
