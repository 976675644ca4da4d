use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageError {
    ZeroDimension,
    /// `data.len()` does not equal `width * height`.
    LengthMismatch { expected: usize, actual: usize },
    NonFinite,
}

impl fmt::Display for ImageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageError::ZeroDimension => write!(f, "image dimensions must be positive"),
            ImageError::LengthMismatch { expected, actual } => {
                write!(f, "image data has {actual} values, expected {expected}")
            }
            ImageError::NonFinite => write!(f, "image contains non-finite values"),
        }
    }
}

/// Single-channel raster, row-major, intensities nominally in [0,1].
#[derive(Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl fmt::Debug for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GrayImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        if data.len() != width * height {
            return Err(ImageError::LengthMismatch { expected: width * height, actual: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite);
        }
        Ok(Self { width, height, data })
    }

    /// Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    /// 8-bit samples scaled by `1 / maxval`.
    pub fn from_u8(width: usize, height: usize, bytes: &[u8], maxval: u8) -> Result<Self, ImageError> {
        let scale = 1.0 / f32::from(maxval.max(1));
        Self::new(width, height, bytes.iter().map(|&b| f32::from(b) * scale).collect())
    }

    /// Quantize to bytes, clamping to [0,1] first.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| libm::roundf(v.clamp(0.0, 1.0) * 255.0) as u8)
            .collect()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Bilinear read. `None` when (x, y) falls outside `[0, w-1] x [0, h-1]`.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if !(x >= 0.0 && y >= 0.0 && x <= max_x && y <= max_y) {
            return None;
        }
        Some(self.sample_unchecked(x, y))
    }

    /// Bilinear read for a point already known to be inside the image.
    #[inline]
    pub(crate) fn sample_unchecked(&self, x: f64, y: f64) -> f64 {
        let x0 = (x as usize).min(self.width - 1);
        let y0 = (y as usize).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let row0 = y0 * self.width;
        let row1 = y1 * self.width;
        let p00 = f64::from(self.data[row0 + x0]);
        let p10 = f64::from(self.data[row0 + x1]);
        let p01 = f64::from(self.data[row1 + x0]);
        let p11 = f64::from(self.data[row1 + x1]);
        let top = p00 + (p10 - p00) * fx;
        let bottom = p01 + (p11 - p01) * fx;
        top + (bottom - top) * fy
    }

    /// Bilinear read where every tap outside the raster contributes 0.
    pub fn sample_or_zero(&self, x: f64, y: f64) -> f64 {
        if let Some(v) = self.sample(x, y) {
            return v;
        }
        let xf = libm::floor(x);
        let yf = libm::floor(y);
        let fx = x - xf;
        let fy = y - yf;
        let tap = |ix: f64, iy: f64| -> f64 {
            if ix < 0.0 || iy < 0.0 || ix >= self.width as f64 || iy >= self.height as f64 {
                0.0
            } else {
                f64::from(self.get(ix as usize, iy as usize))
            }
        };
        let top = tap(xf, yf) * (1.0 - fx) + tap(xf + 1.0, yf) * fx;
        let bottom = tap(xf, yf + 1.0) * (1.0 - fx) + tap(xf + 1.0, yf + 1.0) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Integer crop; the rectangle must lie inside the image.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> GrayImage {
        assert!(w > 0 && h > 0 && x + w <= self.width && y + h <= self.height);
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            let start = row * self.width + x;
            data.extend_from_slice(&self.data[start..start + w]);
        }
        GrayImage { width: w, height: h, data }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}
