use super::{GrayImage, OpticsError, Region};

/// Frames of one scene captured at increasing focus-motor positions.
#[derive(Debug, Clone)]
pub struct FocusStack {
    positions: Vec<f64>,
    frames: Vec<GrayImage>,
}

impl FocusStack {
    pub const MIN_FRAMES: usize = 3;

    pub fn new(positions: Vec<f64>, frames: Vec<GrayImage>) -> Result<Self, OpticsError> {
        if positions.len() != frames.len() {
            return Err(OpticsError::InvalidStack(format!(
                "{} positions but {} frames",
                positions.len(),
                frames.len()
            )));
        }
        if positions.len() < Self::MIN_FRAMES {
            return Err(OpticsError::InvalidStack(format!(
                "need at least {} frames, got {}",
                Self::MIN_FRAMES,
                positions.len()
            )));
        }
        if positions.iter().any(|p| !p.is_finite()) || positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OpticsError::InvalidStack(
                "motor positions must be finite and strictly increasing".into(),
            ));
        }
        let (w, h) = (frames[0].width(), frames[0].height());
        if frames.iter().any(|f| f.width() != w || f.height() != h) {
            return Err(OpticsError::InvalidStack("frames differ in size".into()));
        }
        Ok(Self { positions, frames })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn frames(&self) -> &[GrayImage] {
        &self.frames
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Modified Tenengrad clarity of `region`.
///
/// Sums `G^2 = Gx^2 + Gy^2` of the 3x3 Sobel response over the pixels whose
/// whole 3x3 window lies inside the region, keeping only pixels with
/// `G > threshold`.
pub fn tenengrad(image: &GrayImage, region: Region, threshold: f64) -> Result<f64, OpticsError> {
    region.check(image)?;
    if !(threshold >= 0.0) {
        return Err(OpticsError::InvalidParameter(format!(
            "threshold must be non-negative, got {threshold}"
        )));
    }
    let t2 = threshold * threshold;
    let mut sum = 0.0;
    for y in region.y0 + 1..region.y0 + region.h - 1 {
        for x in region.x0 + 1..region.x0 + region.w - 1 {
            let p = |dx: isize, dy: isize| {
                image.get((x as isize + dx) as usize, (y as isize + dy) as usize)
            };
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            let g2 = gx * gx + gy * gy;
            if g2 > t2 {
                sum += g2;
            }
        }
    }
    Ok(sum)
}

/// Tenengrad (threshold 0) of `region` in every frame, as `(rho, T)` pairs.
pub fn clarity_curve(stack: &FocusStack, region: Region) -> Result<Vec<(f64, f64)>, OpticsError> {
    stack
        .positions
        .iter()
        .zip(&stack.frames)
        .map(|(&rho, frame)| Ok((rho, tenengrad(frame, region, 0.0)?)))
        .collect()
}

/// Motor position of peak clarity.
///
/// The discrete maximum is refined by the vertex of the parabola through it
/// and its two neighbours. A maximum at either end of the curve, or a vertex
/// that falls outside the neighbour interval, returns the discrete argmax.
pub fn peak_focus(curve: &[(f64, f64)]) -> Result<f64, OpticsError> {
    if curve.len() < 3 {
        return Err(OpticsError::CurveTooShort(curve.len()));
    }
    let first = curve[0].1;
    if curve.iter().all(|&(_, t)| t == first) {
        return Err(OpticsError::FlatCurve);
    }
    let mut k = 0;
    for (i, &(_, t)) in curve.iter().enumerate() {
        if t > curve[k].1 {
            k = i;
        }
    }
    if k == 0 || k == curve.len() - 1 {
        return Ok(curve[k].0);
    }
    let (x0, y0) = curve[k - 1];
    let (x1, y1) = curve[k];
    let (x2, y2) = curve[k + 1];
    // Newton form: y = y0 + d1 (x - x0) + a (x - x0)(x - x1).
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let a = (d2 - d1) / (x2 - x0);
    if !(a < 0.0) {
        return Ok(x1);
    }
    let vertex = 0.5 * (x0 + x1) - d1 / (2.0 * a);
    if vertex.is_finite() && vertex >= x0 && vertex <= x2 {
        Ok(vertex)
    } else {
        Ok(x1)
    }
}
