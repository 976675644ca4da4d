use alloc::vec;
use alloc::vec::Vec;

use super::DetectError;
use crate::image::GrayImage;

/// Summed-area tables of an image and of its square.
///
/// `sum(x, y)` holds the sum of all pixels strictly above and left of
/// `(x, y)`, so the first row and column are zero.
#[derive(Debug, Clone)]
pub struct IntegralImage {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    sq: Vec<f64>,
}

pub fn integral_image(img: &GrayImage) -> IntegralImage {
    let (w, h) = (img.width(), img.height());
    let stride = w + 1;
    let mut sum = vec![0.0f64; stride * (h + 1)];
    let mut sq = vec![0.0f64; stride * (h + 1)];
    let data = img.data();
    for y in 0..h {
        let mut row = 0.0f64;
        let mut row_sq = 0.0f64;
        for x in 0..w {
            let v = f64::from(data[y * w + x]);
            row += v;
            row_sq += v * v;
            let i = (y + 1) * stride + x + 1;
            sum[i] = sum[i - stride] + row;
            sq[i] = sq[i - stride] + row_sq;
        }
    }
    IntegralImage { width: w, height: h, sum, sq }
}

impl IntegralImage {
    /// Width of the source image (the table is one wider).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Table entry at corner `(x, y)`, `0 <= x <= width`, `0 <= y <= height`.
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.sum[y * (self.width + 1) + x]
    }

    fn check(&self, x: usize, y: usize, w: usize, h: usize) -> Result<(), DetectError> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            Err(DetectError::OutOfBounds)
        } else {
            Ok(())
        }
    }

    pub fn rect_sum(&self, x: usize, y: usize, w: usize, h: usize) -> Result<f64, DetectError> {
        self.check(x, y, w, h)?;
        Ok(self.rect_sum_unchecked(x, y, w, h))
    }

    pub fn rect_sq_sum(&self, x: usize, y: usize, w: usize, h: usize) -> Result<f64, DetectError> {
        self.check(x, y, w, h)?;
        Ok(Self::corners(&self.sq, self.width + 1, x, y, w, h))
    }

    #[inline]
    pub(crate) fn rect_sum_unchecked(&self, x: usize, y: usize, w: usize, h: usize) -> f64 {
        Self::corners(&self.sum, self.width + 1, x, y, w, h)
    }

    #[inline]
    fn corners(t: &[f64], stride: usize, x: usize, y: usize, w: usize, h: usize) -> f64 {
        let a = y * stride + x;
        let b = (y + h) * stride + x;
        t[b + w] - t[b] - t[a + w] + t[a]
    }

    /// Standard deviation of the square window at `(x, y)` of side `size`.
    #[inline]
    pub(crate) fn window_std(&self, x: usize, y: usize, size: usize) -> f64 {
        let n = (size * size) as f64;
        let s = Self::corners(&self.sum, self.width + 1, x, y, size, size);
        let q = Self::corners(&self.sq, self.width + 1, x, y, size, size);
        let mean = s / n;
        let var = q / n - mean * mean;
        if var > 0.0 {
            crate::math::sqrt(var)
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_and_single_pixel() {
        let ones = GrayImage::filled(4, 4, 1.0);
        let ii = integral_image(&ones);
        assert_eq!(ii.at(4, 4), 16.0);
        assert_eq!(ii.rect_sum(0, 0, 4, 4).unwrap(), 16.0);
        for k in 0..=4 {
            assert_eq!(ii.at(k, 0), 0.0);
            assert_eq!(ii.at(0, k), 0.0);
        }

        let one = GrayImage::filled(1, 1, 0.25);
        let ii = integral_image(&one);
        assert_eq!([ii.at(0, 0), ii.at(1, 0), ii.at(0, 1), ii.at(1, 1)], [0.0, 0.0, 0.0, 0.25]);
    }

    #[test]
    fn zero_area_and_overflowing_rects_rejected() {
        let ii = integral_image(&GrayImage::filled(4, 4, 1.0));
        assert_eq!(ii.rect_sum(0, 0, 0, 2), Err(DetectError::OutOfBounds));
        assert_eq!(ii.rect_sum(1, 1, 2, 0), Err(DetectError::OutOfBounds));
        assert_eq!(ii.rect_sum(3, 0, 2, 2), Err(DetectError::OutOfBounds));
    }

    #[test]
    fn random_rects_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let img = GrayImage::from_fn(16, 16, |_, _| rng.gen::<f32>());
        let ii = integral_image(&img);
        for _ in 0..100 {
            let x = rng.gen_range(0..16);
            let y = rng.gen_range(0..16);
            let w = rng.gen_range(1..=16 - x);
            let h = rng.gen_range(1..=16 - y);
            let mut brute = 0.0f64;
            for yy in y..y + h {
                for xx in x..x + w {
                    brute += f64::from(img.get(xx, yy));
                }
            }
            assert!((ii.rect_sum(x, y, w, h).unwrap() - brute).abs() < 1e-9);
        }
    }

    #[test]
    fn monotone_for_non_negative_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = GrayImage::from_fn(9, 7, |_, _| rng.gen::<f32>());
        let ii = integral_image(&img);
        for y in 0..=7 {
            for x in 1..=9 {
                assert!(ii.at(x, y) >= ii.at(x - 1, y));
            }
        }
        for x in 0..=9 {
            for y in 1..=7 {
                assert!(ii.at(x, y) >= ii.at(x, y - 1));
            }
        }
    }
}
