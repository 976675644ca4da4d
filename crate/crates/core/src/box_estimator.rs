//! The 80-point tracking cloud and median-flow box/landmark estimation.

use alloc::vec::Vec;
use core::fmt;

use crate::geometry::{landmarks_to_normalized, normalized_to_landmarks, BoundingBox, LandmarkSet, Point2};
use crate::math;

/// Points tracked per landmark: a 4x4 grid centered on it.
pub const POINTS_PER_LANDMARK: usize = 16;
pub const CLOUD_SIZE: usize = 5 * POINTS_PER_LANDMARK;
/// Grid spacing as a fraction of the box's short side.
pub const GRID_SPACING_FRACTION: f64 = 0.05;
pub const DEFAULT_MIN_SUPPORT: usize = 8;

const GRID_OFFSETS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoxEstimateError {
    DegenerateBox,
    InsufficientSupport { got: usize, needed: usize },
}

impl fmt::Display for BoxEstimateError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxEstimateError::DegenerateBox => write!(f, "box too small to space grid points"),
            BoxEstimateError::InsufficientSupport { got, needed } => {
                write!(f, "{got} point pairs survived filtering, need at least {needed}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point2>,
    /// Landmark index (0..5) each point was generated around.
    pub owner_landmark: Vec<u8>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// For each landmark, a 4x4 grid at offsets {±0.5s, ±1.5s}² around it, with
/// `s` = 5% of the box's short side. The landmark is the centroid of its
/// 16 points rather than a node of the grid.
pub fn generate_grid_points(lm: &LandmarkSet, b: &BoundingBox) -> Result<PointCloud, BoxEstimateError> {
    let s = GRID_SPACING_FRACTION * b.short_side();
    if !(s > 0.0) || !s.is_finite() {
        return Err(BoxEstimateError::DegenerateBox);
    }
    let mut points = Vec::with_capacity(CLOUD_SIZE);
    let mut owner_landmark = Vec::with_capacity(CLOUD_SIZE);
    for (i, p) in lm.points.iter().enumerate() {
        for oy in GRID_OFFSETS {
            for ox in GRID_OFFSETS {
                points.push(Point2::new(p.x + ox * s, p.y + oy * s));
                owner_landmark.push(i as u8);
            }
        }
    }
    Ok(PointCloud { points, owner_landmark })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxEstimate {
    pub bbox: BoundingBox,
    pub dx: f64,
    pub dy: f64,
    pub scale: f64,
    /// Number of point pairs the medians were taken over.
    pub support: usize,
}

/// Median translation and median pairwise-distance ratio applied to
/// `prev_box` about its center.
pub fn estimate_box(
    prev_box: &BoundingBox,
    pairs: &[(Point2, Point2)],
    min_support: usize,
) -> Result<BoxEstimate, BoxEstimateError> {
    let needed = min_support.max(1);
    if pairs.len() < needed {
        return Err(BoxEstimateError::InsufficientSupport { got: pairs.len(), needed });
    }
    let mut dxs: Vec<f64> = pairs.iter().map(|(p, c)| c.x - p.x).collect();
    let mut dys: Vec<f64> = pairs.iter().map(|(p, c)| c.y - p.y).collect();
    let dx = math::median_in_place(&mut dxs);
    let dy = math::median_in_place(&mut dys);

    let mut ratios = Vec::with_capacity(pairs.len() * (pairs.len() - 1) / 2);
    for i in 0..pairs.len() {
        for j in i + 1..pairs.len() {
            let before = pairs[i].0.distance(&pairs[j].0);
            if before < 1e-6 {
                continue;
            }
            ratios.push(pairs[i].1.distance(&pairs[j].1) / before);
        }
    }
    let scale = if ratios.is_empty() { 1.0 } else { math::median_in_place(&mut ratios) };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(BoxEstimateError::DegenerateBox);
    }

    let c = prev_box.center();
    let bbox = BoundingBox::from_center(c.x + dx, c.y + dy, prev_box.w * scale, prev_box.h * scale);
    Ok(BoxEstimate { bbox, dx, dy, scale, support: pairs.len() })
}

/// Carry landmarks from `prev_box` to `new_box`, preserving their
/// box-relative coordinates.
pub fn estimate_landmarks(prev_lm: &LandmarkSet, prev_box: &BoundingBox, new_box: &BoundingBox) -> LandmarkSet {
    if prev_box == new_box {
        return *prev_lm;
    }
    normalized_to_landmarks(&landmarks_to_normalized(prev_lm, prev_box), new_box)
}
