//! Clarity-based monocular ranging.
//!
//! A region's sharpness (Tenengrad) is swept over the focus motor range; the
//! motor position of peak clarity maps to object distance through the fitted
//! hyperbolic [`RangingModel`]. The depth of field bounds the error of a
//! single reading.
//!
//! Depths are in centimetres and motor positions in abstract motor units
//! throughout this module.

mod depth_map;
mod fit;
mod image;
pub mod io;
mod ranging;
mod render;
mod tenengrad;

pub use depth_map::{depth_map, depth_map_with, DepthCell, DepthMap};
pub use fit::{fit_ranging_model, synthetic_calibration_samples, RangingFit, MAX_FIT_ITERATIONS};
pub use image::{GrayImage, Region};
pub use ranging::RangingModel;
pub use render::{simulate_focus_stack, simulate_focus_stack_with, DefocusScene};
pub use tenengrad::{clarity_curve, peak_focus, tenengrad, FocusStack};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("image distance {image_distance} does not exceed focal length {focal}")]
    NoObjectDistance { image_distance: f64, focal: f64 },
    #[error("motor position {rho} is at or below minimum focus (kappa*rho <= f)")]
    BeyondMinimumFocus { rho: f64 },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid region {x0},{y0} {w}x{h}: {reason}")]
    InvalidRegion {
        x0: usize,
        y0: usize,
        w: usize,
        h: usize,
        reason: &'static str,
    },
    #[error("invalid focus stack: {0}")]
    InvalidStack(String),
    #[error("clarity curve needs at least 3 points, got {0}")]
    CurveTooShort(usize),
    #[error("clarity curve is flat, no peak")]
    FlatCurve,
    #[error("need at least {needed} calibration samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("calibration samples must have distinct motor positions")]
    DuplicatePositions,
    #[error("fit did not converge after {iterations} iterations (best sse {sse})")]
    FitFailed {
        best: RangingModel,
        sse: f64,
        iterations: usize,
    },
    #[error("far depth-of-field limit is infinite at u = {u}")]
    Hyperfocal { u: f64 },
}

/// Equivalent single-lens model of the camera.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ThinLens {
    /// Focal length, cm.
    pub focal: f64,
}

impl ThinLens {
    pub fn new(focal: f64) -> Result<Self, OpticsError> {
        if !(focal.is_finite() && focal > 0.0) {
            return Err(OpticsError::InvalidParameter(format!(
                "focal length must be positive, got {focal}"
            )));
        }
        Ok(Self { focal })
    }

    /// Image distance that brings an object at `u` into focus.
    pub fn image_distance(&self, u: f64) -> Result<f64, OpticsError> {
        // The lens equation is symmetric in (u, v).
        thin_lens_object_distance(*self, u)
    }
}

/// Object distance `u = f v / (v - f)` for an image distance `v > f`.
pub fn thin_lens_object_distance(lens: ThinLens, image_distance: f64) -> Result<f64, OpticsError> {
    let f = lens.focal;
    if !(image_distance > f) {
        return Err(OpticsError::NoObjectDistance {
            image_distance,
            focal: f,
        });
    }
    Ok(f * image_distance / (image_distance - f))
}

/// Sensor parameters that set the depth of field.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DofParams {
    /// Aperture value (f-number).
    pub aperture: f64,
    /// Pixel pitch, cm.
    pub pixel_pitch: f64,
}

impl DofParams {
    pub fn new(aperture: f64, pixel_pitch: f64) -> Result<Self, OpticsError> {
        if !(aperture.is_finite() && aperture > 0.0) {
            return Err(OpticsError::InvalidParameter(format!(
                "aperture must be positive, got {aperture}"
            )));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(OpticsError::InvalidParameter(format!(
                "pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        Ok(Self {
            aperture,
            pixel_pitch,
        })
    }
}

/// Total depth of field `L = L1 + L2` around a focused object distance `u`.
///
/// Everything in `[u - L1, u + L2]` images sharper than one pixel, so `L` is
/// the error band of a single clarity-peak range reading. `u = f` gives 0.
pub fn depth_of_field(lens: ThinLens, dof: DofParams, u: f64) -> Result<f64, OpticsError> {
    let f = lens.focal;
    if !(u >= f) || !u.is_finite() {
        return Err(OpticsError::InvalidParameter(format!(
            "object distance {u} must be at least the focal length {f}"
        )));
    }
    let f2 = f * f;
    let spread = dof.aperture * dof.pixel_pitch * (u - f);
    if f2 <= spread {
        return Err(OpticsError::Hyperfocal { u });
    }
    Ok(f2 * u / (f2 - spread) - f2 * u / (f2 + spread))
}
