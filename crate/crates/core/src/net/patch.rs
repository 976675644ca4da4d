use alloc::vec::Vec;

use super::tensor::Tensor;
use super::NetError;
use crate::geometry::BoundingBox;
use crate::image::GrayImage;
use crate::math;

/// Bilinear resample of `region` to `out_h` x `out_w`, then zero mean and
/// unit variance. Output pixel `(i, j)` reads the frame at
/// `region.x + (j + 0.5) * region.w / out_w - 0.5` (likewise for rows), so a
/// region resampled at its native size hits the pixel grid exactly. Samples
/// outside the frame read as 0; a flat patch (sigma < 1e-8) comes out all
/// zeros.
pub fn extract_patch(img: &GrayImage, region: &BoundingBox, out_h: usize, out_w: usize) -> Result<Tensor, NetError> {
    let raw = resample(img, region, out_h, out_w)?;
    Ok(normalize(raw))
}

/// The resampling step alone, before normalization.
pub fn resample(img: &GrayImage, region: &BoundingBox, out_h: usize, out_w: usize) -> Result<Tensor, NetError> {
    let frame = BoundingBox { x: 0.0, y: 0.0, w: img.width() as f64, h: img.height() as f64 };
    if region.intersection(&frame).is_none() {
        return Err(NetError::DegenerateRegion);
    }
    resample_anywhere(img, region, out_h, out_w)
}

/// Like `extract_patch` but a region entirely off the frame is allowed and
/// yields a zero patch.
pub(crate) fn extract_patch_anywhere(
    img: &GrayImage,
    region: &BoundingBox,
    out_h: usize,
    out_w: usize,
) -> Result<Tensor, NetError> {
    Ok(normalize(resample_anywhere(img, region, out_h, out_w)?))
}

fn resample_anywhere(img: &GrayImage, region: &BoundingBox, out_h: usize, out_w: usize) -> Result<Tensor, NetError> {
    if out_h == 0 || out_w == 0 || !region.is_valid() {
        return Err(NetError::DegenerateRegion);
    }
    let sx = region.w / out_w as f64;
    let sy = region.h / out_h as f64;
    let mut data = Vec::with_capacity(out_h * out_w);
    for i in 0..out_h {
        let y = region.y + (i as f64 + 0.5) * sy - 0.5;
        for j in 0..out_w {
            let x = region.x + (j as f64 + 0.5) * sx - 0.5;
            data.push(img.sample_or_zero(x, y));
        }
    }
    Tensor::new(1, out_h, out_w, data)
}

fn normalize(mut t: Tensor) -> Tensor {
    let n = t.len() as f64;
    let mean = t.data.iter().sum::<f64>() / n;
    let var = t.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = math::sqrt(var);
    if sigma < 1e-8 {
        t.data.fill(0.0);
    } else {
        for v in t.data.iter_mut() {
            *v = (*v - mean) / sigma;
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> GrayImage {
        GrayImage::from_fn(20, 16, |x, y| ((x * 7 + y * 13) % 17) as f32 / 17.0)
    }

    #[test]
    fn normalized_moments() {
        let img = ramp();
        let r = BoundingBox::new(2.3, 1.7, 11.0, 9.5).unwrap();
        let p = extract_patch(&img, &r, 15, 15).unwrap();
        let n = p.len() as f64;
        let mean = p.data.iter().sum::<f64>() / n;
        let var = p.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn flat_region_is_zero() {
        let img = GrayImage::filled(10, 10, 0.4);
        let p = extract_patch(&img, &BoundingBox::new(1.0, 1.0, 5.0, 5.0).unwrap(), 4, 4).unwrap();
        assert!(p.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn native_size_is_identity() {
        let img = ramp();
        let r = BoundingBox::new(3.0, 2.0, 8.0, 6.0).unwrap();
        let p = resample(&img, &r, 6, 8).unwrap();
        for i in 0..6 {
            for j in 0..8 {
                assert!((p.at(0, i, j) - f64::from(img.get(3 + j, 2 + i))).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn outside_reads_zero_and_disjoint_fails() {
        let img = GrayImage::filled(10, 10, 1.0);
        let p = resample(&img, &BoundingBox::new(-5.0, 0.0, 10.0, 10.0).unwrap(), 10, 10).unwrap();
        assert_eq!(p.at(0, 5, 0), 0.0);
        assert_eq!(p.at(0, 5, 9), 1.0);
        let far = BoundingBox::new(50.0, 50.0, 5.0, 5.0).unwrap();
        assert_eq!(extract_patch(&img, &far, 4, 4), Err(NetError::DegenerateRegion));
        let flat = BoundingBox { x: 1.0, y: 1.0, w: 0.0, h: 3.0 };
        assert_eq!(extract_patch(&img, &flat, 4, 4), Err(NetError::DegenerateRegion));
    }
}
