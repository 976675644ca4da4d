use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::cascade::CascadeModel;
use super::integral::integral_image;
use super::DetectError;
use crate::geometry::{bbox_iou, clamp_bbox, BoundingBox};
use crate::image::GrayImage;
use crate::math;

/// The local scan region is the estimated box grown by this factor about its center.
pub const LOCAL_SEARCH_EXPANSION: f64 = 2.0;
/// A local detection confirms the estimated box at this IoU or above.
pub const VALIDATION_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DetectParams {
    /// Smallest window side, in pixels.
    pub min_size: usize,
    pub scale_factor: f64,
    /// Window step as a fraction of the window side (at least 1 px).
    pub step_fraction: f64,
    pub group_min_neighbors: usize,
    pub group_iou: f64,
    /// Restrict the scan to this part of the frame.
    pub region: Option<BoundingBox>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            min_size: 24,
            scale_factor: 1.1,
            step_fraction: 0.05,
            group_min_neighbors: 3,
            group_iou: 0.3,
            region: None,
        }
    }
}

impl DetectParams {
    pub fn validate(&self) -> Result<(), DetectError> {
        let ok = self.min_size > 0
            && self.scale_factor > 1.0
            && self.scale_factor.is_finite()
            && self.step_fraction > 0.0
            && self.step_fraction <= 1.0
            && self.group_iou.is_finite();
        if ok {
            Ok(())
        } else {
            Err(DetectError::InvalidParams)
        }
    }

    pub fn with_region(&self, region: Option<BoundingBox>) -> Self {
        Self { region, ..*self }
    }
}

/// A grouped detection and the number of raw windows merged into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub neighbors: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Detections {
    /// Sorted by descending neighbor count.
    pub faces: Vec<Detection>,
    pub raw_count: usize,
    pub windows_evaluated: usize,
}

/// Union-find over raw windows linked by IoU >= `min_iou`; components with
/// at least `min_neighbors` members collapse to their mean box.
pub fn group_detections(raw: &[BoundingBox], min_iou: f64, min_neighbors: usize) -> Vec<Detection> {
    let n = raw.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if bbox_iou(&raw[i], &raw[j]) >= min_iou {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    // (root, count, sum x, sum y, sum w, sum h)
    let mut groups: Vec<(usize, usize, [f64; 4])> = Vec::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        let b = raw[i];
        match groups.iter_mut().find(|g| g.0 == root) {
            Some(g) => {
                g.1 += 1;
                g.2[0] += b.x;
                g.2[1] += b.y;
                g.2[2] += b.w;
                g.2[3] += b.h;
            }
            None => groups.push((root, 1, [b.x, b.y, b.w, b.h])),
        }
    }
    let mut out: Vec<Detection> = groups
        .into_iter()
        .filter(|g| g.1 >= min_neighbors.max(1))
        .map(|(_, count, s)| {
            let k = count as f64;
            Detection {
                bbox: BoundingBox { x: s[0] / k, y: s[1] / k, w: s[2] / k, h: s[3] / k },
                neighbors: count,
            }
        })
        .collect();
    out.sort_by(|a, b| {
        b.neighbors
            .cmp(&a.neighbors)
            .then(a.bbox.y.total_cmp(&b.bbox.y))
            .then(a.bbox.x.total_cmp(&b.bbox.x))
    });
    out
}

/// Multi-scale sliding-window scan over the frame, or over `params.region`.
pub fn detect_faces(img: &GrayImage, model: &CascadeModel, params: &DetectParams) -> Result<Detections, DetectError> {
    params.validate()?;
    let (fw, fh) = (img.width() as f64, img.height() as f64);
    let region = match params.region {
        Some(r) => clamp_bbox(&r, fw, fh).map_err(|_| DetectError::RegionOutsideFrame)?,
        None => BoundingBox { x: 0.0, y: 0.0, w: fw, h: fh },
    };
    // Whole pixels inside the region.
    let x0 = math::ceil_to_usize(region.x);
    let y0 = math::ceil_to_usize(region.y);
    let x1 = (math::floor(region.right()) as usize).min(img.width());
    let y1 = (math::floor(region.bottom()) as usize).min(img.height());
    if x1 <= x0 || y1 <= y0 {
        return Ok(Detections::default());
    }
    let (rw, rh) = (x1 - x0, y1 - y0);
    let max_size = rw.min(rh);
    if max_size < params.min_size {
        return Ok(Detections::default());
    }

    let sub = if rw == img.width() && rh == img.height() { None } else { Some(img.crop(x0, y0, rw, rh)) };
    let ii = integral_image(sub.as_ref().unwrap_or(img));

    let mut raw = Vec::new();
    let mut windows = 0usize;
    let mut last_size = 0usize;
    let mut k = 0i32;
    loop {
        let size_f = params.min_size as f64 * libm::pow(params.scale_factor, f64::from(k));
        k += 1;
        let size = math::round(size_f) as usize;
        if size > max_size {
            break;
        }
        if size == last_size {
            continue;
        }
        last_size = size;
        let step = (math::round(params.step_fraction * size as f64) as usize).max(1);
        let scaled = model.scaled(size);
        let mut y = 0;
        while y + size <= rh {
            let mut x = 0;
            while x + size <= rw {
                windows += 1;
                if scaled.eval(&ii, x, y).passed() {
                    raw.push(BoundingBox {
                        x: (x + x0) as f64,
                        y: (y + y0) as f64,
                        w: scaled.size() as f64,
                        h: scaled.size() as f64,
                    });
                }
                x += step;
            }
            y += step;
        }
    }
    let faces = group_detections(&raw, params.group_iou, params.group_min_neighbors);
    Ok(Detections { faces, raw_count: raw.len(), windows_evaluated: windows })
}

/// Full-frame scan; the best-supported face, if any.
pub fn detect_global(img: &GrayImage, model: &CascadeModel, params: &DetectParams) -> Option<Detection> {
    detect_global_detailed(img, model, params).ok()?.faces.first().copied()
}

pub fn detect_global_detailed(
    img: &GrayImage,
    model: &CascadeModel,
    params: &DetectParams,
) -> Result<Detections, DetectError> {
    detect_faces(img, model, &params.with_region(None))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalValidation {
    /// Carries the estimated box, not the detector's.
    Validated(BoundingBox),
    Failed,
}

/// Scan around `est_box` and confirm it against the local detections.
pub fn validate_local(
    img: &GrayImage,
    model: &CascadeModel,
    params: &DetectParams,
    est_box: &BoundingBox,
) -> LocalValidation {
    validate_local_detailed(img, model, params, est_box).0
}

pub fn validate_local_detailed(
    img: &GrayImage,
    model: &CascadeModel,
    params: &DetectParams,
    est_box: &BoundingBox,
) -> (LocalValidation, Detections) {
    if !est_box.is_valid() {
        return (LocalValidation::Failed, Detections::default());
    }
    let region = match clamp_bbox(
        &est_box.scaled_about_center(LOCAL_SEARCH_EXPANSION),
        img.width() as f64,
        img.height() as f64,
    ) {
        Ok(r) => r,
        Err(_) => return (LocalValidation::Failed, Detections::default()),
    };
    let dets = match detect_faces(img, model, &params.with_region(Some(region))) {
        Ok(d) => d,
        Err(_) => return (LocalValidation::Failed, Detections::default()),
    };
    let confirmed = dets.faces.iter().any(|d| bbox_iou(&d.bbox, est_box) >= VALIDATION_IOU);
    let outcome = if confirmed { LocalValidation::Validated(*est_box) } else { LocalValidation::Failed };
    (outcome, dets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn grouping_merges_overlaps_and_drops_sparse() {
        let raw = vec![
            BoundingBox { x: 10.0, y: 10.0, w: 20.0, h: 20.0 },
            BoundingBox { x: 11.0, y: 10.0, w: 20.0, h: 20.0 },
            BoundingBox { x: 12.0, y: 11.0, w: 20.0, h: 20.0 },
            BoundingBox { x: 100.0, y: 100.0, w: 20.0, h: 20.0 },
        ];
        let g = group_detections(&raw, 0.3, 3);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].neighbors, 3);
        assert!((g[0].bbox.x - 11.0).abs() < 1e-12);
        assert!((g[0].bbox.y - 31.0 / 3.0).abs() < 1e-12);
        assert_eq!(group_detections(&raw, 0.3, 1).len(), 2);
    }

    #[test]
    fn params_validation() {
        assert!(DetectParams::default().validate().is_ok());
        let bad = DetectParams { scale_factor: 1.0, ..DetectParams::default() };
        assert_eq!(bad.validate(), Err(DetectError::InvalidParams));
        let bad = DetectParams { step_fraction: 0.0, ..DetectParams::default() };
        assert_eq!(bad.validate(), Err(DetectError::InvalidParams));
    }

    #[test]
    fn region_outside_frame() {
        let img = GrayImage::filled(64, 64, 0.5);
        let model = crate::synth::face_cascade();
        let params = DetectParams { region: Some(BoundingBox { x: 100.0, y: 0.0, w: 10.0, h: 10.0 }), ..DetectParams::default() };
        assert_eq!(detect_faces(&img, &model, &params), Err(DetectError::RegionOutsideFrame));
    }
}
