//! Synthetic focus sweeps for exercising the ranging pipeline.

use super::{DofParams, FocusStack, GrayImage, OpticsError, RangingModel, ThinLens};
use crate::exec::{self, Execution};

/// A textured scene with a per-pixel object distance (cm).
#[derive(Debug, Clone)]
pub struct DefocusScene {
    texture: GrayImage,
    depth: Vec<f64>,
}

impl DefocusScene {
    pub fn new(texture: GrayImage, depth: Vec<f64>) -> Result<Self, OpticsError> {
        if depth.len() != texture.width() * texture.height() {
            return Err(OpticsError::InvalidImage(format!(
                "depth grid has {} cells for a {}x{} texture",
                depth.len(),
                texture.width(),
                texture.height()
            )));
        }
        if depth.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(OpticsError::InvalidImage("depths must be positive and finite".into()));
        }
        Ok(Self { texture, depth })
    }

    pub fn uniform(texture: GrayImage, depth: f64) -> Result<Self, OpticsError> {
        let n = texture.width() * texture.height();
        Self::new(texture, vec![depth; n])
    }

    pub fn texture(&self) -> &GrayImage {
        &self.texture
    }

    pub fn depth(&self) -> &[f64] {
        &self.depth
    }
}

/// Renders one frame per motor position.
///
/// Each pixel is blurred by a Gaussian with
/// `sigma = blur_scale * aperture * |1/u - 1/h(rho)|` pixels, where `u` is
/// the pixel's depth and `h(rho)` the in-focus distance. The blur is applied
/// as a horizontal then a vertical pass, each using the output pixel's sigma,
/// which is exact wherever the depth is locally constant.
pub fn simulate_focus_stack(
    scene: &DefocusScene,
    lens: ThinLens,
    dof: DofParams,
    model: &RangingModel,
    positions: &[f64],
    blur_scale: f64,
) -> Result<FocusStack, OpticsError> {
    simulate_focus_stack_with(Execution::default(), scene, lens, dof, model, positions, blur_scale)
}

pub fn simulate_focus_stack_with(
    exec: Execution,
    scene: &DefocusScene,
    lens: ThinLens,
    dof: DofParams,
    model: &RangingModel,
    positions: &[f64],
    blur_scale: f64,
) -> Result<FocusStack, OpticsError> {
    if !(blur_scale.is_finite() && blur_scale >= 0.0) {
        return Err(OpticsError::InvalidParameter(format!(
            "blur scale must be non-negative, got {blur_scale}"
        )));
    }
    if scene.depth.iter().any(|&u| u <= lens.focal) {
        return Err(OpticsError::InvalidParameter(
            "scene depths must exceed the focal length".into(),
        ));
    }
    let focus: Vec<f64> = positions
        .iter()
        .map(|&rho| model.depth(rho))
        .collect::<Result<_, _>>()?;
    let frames = focus
        .iter()
        .map(|&u_focus| {
            let sigma: Vec<f64> = scene
                .depth
                .iter()
                .map(|&u| blur_scale * dof.aperture * (1.0 / u - 1.0 / u_focus).abs())
                .collect();
            blur(exec, &scene.texture, &sigma)
        })
        .collect::<Result<Vec<_>, _>>()?;
    FocusStack::new(positions.to_vec(), frames)
}

fn blur(exec: Execution, img: &GrayImage, sigma: &[f64]) -> Result<GrayImage, OpticsError> {
    let (w, h) = (img.width(), img.height());
    let src = img.samples();
    let rows = exec::map_indexed(exec, h, |y| {
        (0..w)
            .map(|x| {
                let i = y * w + x;
                gather(sigma[i], x, w, |k| src[y * w + k])
            })
            .collect::<Vec<_>>()
    });
    let pass1: Vec<f64> = rows.concat();
    let rows = exec::map_indexed(exec, h, |y| {
        (0..w)
            .map(|x| gather(sigma[y * w + x], y, h, |k| pass1[k * w + x]))
            .collect::<Vec<_>>()
    });
    GrayImage::new(w, h, rows.concat())
}

/// One-dimensional normalized Gaussian tap sum around `centre`, clamping at
/// the borders.
#[inline]
fn gather(sigma: f64, centre: usize, len: usize, at: impl Fn(usize) -> f64) -> f64 {
    if sigma < 1e-3 {
        return at(centre);
    }
    let radius = ((3.0 * sigma).ceil() as usize).min(len);
    let inv = -0.5 / (sigma * sigma);
    let mut acc = 0.0;
    let mut norm = 0.0;
    for k in -(radius as isize)..=radius as isize {
        let wgt = ((k * k) as f64 * inv).exp();
        let idx = (centre as isize + k).clamp(0, len as isize - 1) as usize;
        acc += wgt * at(idx);
        norm += wgt;
    }
    acc / norm
}
