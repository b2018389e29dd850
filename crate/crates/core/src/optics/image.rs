use super::OpticsError;

/// Single-channel image with intensities nominally in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self, OpticsError> {
        if width < 3 || height < 3 {
            return Err(OpticsError::InvalidImage(format!(
                "image must be at least 3x3, got {width}x{height}"
            )));
        }
        if samples.len() != width * height {
            return Err(OpticsError::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height,
                samples.len()
            )));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(OpticsError::InvalidImage("non-finite sample".into()));
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, OpticsError> {
        let mut samples = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                samples.push(f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, OpticsError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.samples[y * self.width + x]
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn full_region(&self) -> Region {
        Region {
            x0: 0,
            y0: 0,
            w: self.width,
            h: self.height,
        }
    }
}

/// Pixel rectangle `[x0, x0 + w) x [y0, y0 + h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Region {
    pub fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub(crate) fn check(&self, image: &GrayImage) -> Result<(), OpticsError> {
        let err = |reason| OpticsError::InvalidRegion {
            x0: self.x0,
            y0: self.y0,
            w: self.w,
            h: self.h,
            reason,
        };
        if self.w < 3 || self.h < 3 {
            return Err(err("smaller than 3x3"));
        }
        if self.x0 + self.w > image.width() || self.y0 + self.h > image.height() {
            return Err(err("outside the image"));
        }
        Ok(())
    }
}
