//! Image pyramids, iterative pyramidal Lucas-Kanade, and forward-backward
//! (median-flow) error filtering.
//!
//! Coordinates follow the raster convention used everywhere in the crate:
//! pixel `(i, j)` sits at the integer point `(i, j)`. A 2x2 box-mean pyramid
//! level `k+1` pixel `u` therefore corresponds to level-`k` coordinate
//! `2u + 0.5`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::geometry::Point2;
use crate::image::GrayImage;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct FlowConfig {
    /// Half-width of the square integration window (4 gives 9x9).
    pub window_radius: usize,
    pub pyramid_levels: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the per-iteration update, in pixels.
    pub epsilon: f64,
    /// Minimum eigenvalue of the per-pixel averaged structure tensor.
    pub min_eigen_threshold: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            window_radius: 4,
            pyramid_levels: 3,
            max_iterations: 20,
            epsilon: 0.01,
            min_eigen_threshold: 1e-4,
        }
    }
}

impl FlowConfig {
    /// Smallest image side that can hold a window plus the half-pixel
    /// gradient taps.
    pub fn min_side(&self) -> usize {
        2 * self.window_radius + 2
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if self.window_radius == 0
            || self.pyramid_levels == 0
            || self.max_iterations == 0
            || !(self.epsilon > 0.0)
            || !(self.min_eigen_threshold >= 0.0)
        {
            return Err(FlowError::InvalidConfig);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowError {
    ImageTooSmall,
    DimensionMismatch,
    EmptyPointList,
    NoValidPoints,
    InvalidConfig,
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            FlowError::ImageTooSmall => "image is smaller than the tracking window",
            FlowError::DimensionMismatch => "previous and next images differ in size",
            FlowError::EmptyPointList => "no points to track",
            FlowError::NoValidPoints => "no successfully tracked points",
            FlowError::InvalidConfig => "flow configuration values must be positive",
        };
        f.write_str(msg)
    }
}

#[derive(Debug, Clone)]
pub struct ImagePyramid {
    levels: Vec<GrayImage>,
}

impl ImagePyramid {
    pub fn levels(&self) -> &[GrayImage] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &GrayImage {
        &self.levels[0]
    }
}

fn downsample(img: &GrayImage) -> GrayImage {
    let w = img.width() / 2;
    let h = img.height() / 2;
    let src = img.data();
    let sw = img.width();
    GrayImage::from_fn(w, h, |x, y| {
        let i = 2 * y * sw + 2 * x;
        0.25 * (src[i] + src[i + 1] + src[i + sw] + src[i + sw + 1])
    })
}

/// Level 0 is `img`; each further level halves both sides with a 2x2 mean.
/// Stops once the next level could not host the window.
pub fn build_pyramid(img: &GrayImage, cfg: &FlowConfig) -> Result<ImagePyramid, FlowError> {
    let min_side = cfg.min_side();
    if img.width().min(img.height()) < min_side {
        return Err(FlowError::ImageTooSmall);
    }
    let mut levels = vec![img.clone()];
    while levels.len() < cfg.pyramid_levels.max(1) {
        let last = levels.last().expect("non-empty");
        if (last.width() / 2).min(last.height() / 2) < min_side {
            break;
        }
        let next = downsample(last);
        levels.push(next);
    }
    Ok(ImagePyramid { levels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackFailure {
    /// Structure tensor too weak: no texture to lock on to.
    Untextured,
    /// The window left the image.
    OutOfBounds,
    /// The solution became non-finite.
    Diverged,
}

#[inline]
fn to_level(p: Point2, level: usize) -> Point2 {
    let s = (1u64 << level) as f64;
    Point2::new((p.x + 0.5) / s - 0.5, (p.y + 0.5) / s - 0.5)
}

#[inline]
fn window_fits(img: &GrayImage, c: Point2, reach: f64) -> bool {
    c.x - reach >= 0.0
        && c.y - reach >= 0.0
        && c.x + reach <= (img.width() - 1) as f64
        && c.y + reach <= (img.height() - 1) as f64
}

/// Track one point from `prev` to `next` with coarse-to-fine iterative LK.
pub fn lk_track_point(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    p: Point2,
    cfg: &FlowConfig,
) -> Result<Point2, TrackFailure> {
    let r = cfg.window_radius as isize;
    let reach = cfg.window_radius as f64 + 0.5;
    let side = (2 * r + 1) as usize;
    let n = side * side;
    let levels = prev.num_levels().min(next.num_levels());

    if !p.is_finite() || !window_fits(prev.base(), p, reach) {
        return Err(TrackFailure::OutOfBounds);
    }
    // Coarsest level whose image still hosts the window around the point.
    let start = (0..levels)
        .rev()
        .find(|&l| window_fits(&prev.levels[l], to_level(p, l), reach))
        .unwrap_or(0);

    let mut templ = vec![0.0f64; n];
    let mut gx = vec![0.0f64; n];
    let mut gy = vec![0.0f64; n];
    // Displacement estimate, expressed in the current level's pixels.
    let mut guess = (0.0f64, 0.0f64);

    for level in (0..=start).rev() {
        let img_i = &prev.levels[level];
        let img_j = &next.levels[level];
        let c = to_level(p, level);

        let (mut gxx, mut gxy, mut gyy) = (0.0, 0.0, 0.0);
        let mut k = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let qx = c.x + dx as f64;
                let qy = c.y + dy as f64;
                let ix = img_i.sample_unchecked(qx + 0.5, qy) - img_i.sample_unchecked(qx - 0.5, qy);
                let iy = img_i.sample_unchecked(qx, qy + 0.5) - img_i.sample_unchecked(qx, qy - 0.5);
                templ[k] = img_i.sample_unchecked(qx, qy);
                gx[k] = ix;
                gy[k] = iy;
                gxx += ix * ix;
                gxy += ix * iy;
                gyy += iy * iy;
                k += 1;
            }
        }
        let det = gxx * gyy - gxy * gxy;
        let inv_n = 1.0 / n as f64;
        let half_tr = 0.5 * (gxx + gyy) * inv_n;
        let disc = math::sqrt((0.25 * (gxx - gyy) * (gxx - gyy) + gxy * gxy).max(0.0)) * inv_n;
        let min_eig = half_tr - disc;
        if min_eig < cfg.min_eigen_threshold || det <= f64::EPSILON * (gxx + gyy) * (gxx + gyy) {
            if level == 0 {
                return Err(TrackFailure::Untextured);
            }
            // Too smooth at this scale; carry the estimate down unchanged.
            guess = (2.0 * guess.0, 2.0 * guess.1);
            continue;
        }

        let (mut vx, mut vy) = (0.0f64, 0.0f64);
        for _ in 0..cfg.max_iterations {
            let ox = guess.0 + vx;
            let oy = guess.1 + vy;
            if !window_fits(img_j, Point2::new(c.x + ox, c.y + oy), cfg.window_radius as f64) {
                return Err(TrackFailure::OutOfBounds);
            }
            let (mut bx, mut by) = (0.0, 0.0);
            let mut k = 0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let j = img_j.sample_unchecked(c.x + dx as f64 + ox, c.y + dy as f64 + oy);
                    let diff = templ[k] - j;
                    bx += diff * gx[k];
                    by += diff * gy[k];
                    k += 1;
                }
            }
            let ux = (gyy * bx - gxy * by) / det;
            let uy = (gxx * by - gxy * bx) / det;
            if !ux.is_finite() || !uy.is_finite() {
                return Err(TrackFailure::Diverged);
            }
            vx += ux;
            vy += uy;
            if math::hypot(ux, uy) < cfg.epsilon {
                break;
            }
        }
        let d = (guess.0 + vx, guess.1 + vy);
        guess = if level > 0 { (2.0 * d.0, 2.0 * d.1) } else { d };
    }

    let out = Point2::new(p.x + guess.0, p.y + guess.1);
    if !out.is_finite() {
        return Err(TrackFailure::Diverged);
    }
    if !window_fits(next.base(), out, cfg.window_radius as f64) {
        return Err(TrackFailure::OutOfBounds);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FbStatus {
    Ok,
    LostForward,
    LostBackward,
    OutOfBounds,
}

/// One point's forward-backward trajectory.
///
/// When a direction fails, the estimates it would have produced are set to
/// the last known position and `fb_error` is `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbResult {
    pub original: Point2,
    pub forward_estimate: Point2,
    pub backward_estimate: Point2,
    /// Euclidean distance between `original` and `backward_estimate`.
    pub fb_error: f64,
    pub status: FbStatus,
}

impl FbResult {
    pub fn is_ok(&self) -> bool {
        self.status == FbStatus::Ok
    }
}

fn status_for(failure: TrackFailure, forward: bool) -> FbStatus {
    match (failure, forward) {
        (TrackFailure::OutOfBounds, _) => FbStatus::OutOfBounds,
        (_, true) => FbStatus::LostForward,
        (_, false) => FbStatus::LostBackward,
    }
}

/// Forward-backward tracking against pyramids that were already built.
pub fn track_forward_backward_pyramids(
    prev: &ImagePyramid,
    next: &ImagePyramid,
    points: &[Point2],
    cfg: &FlowConfig,
) -> Result<Vec<FbResult>, FlowError> {
    if prev.base().width() != next.base().width() || prev.base().height() != next.base().height() {
        return Err(FlowError::DimensionMismatch);
    }
    if points.is_empty() {
        return Err(FlowError::EmptyPointList);
    }
    let results = points
        .iter()
        .map(|&p| {
            let failed = |status, fwd: Point2| FbResult {
                original: p,
                forward_estimate: fwd,
                backward_estimate: fwd,
                fb_error: f64::INFINITY,
                status,
            };
            let fwd = match lk_track_point(prev, next, p, cfg) {
                Ok(q) => q,
                Err(e) => return failed(status_for(e, true), p),
            };
            match lk_track_point(next, prev, fwd, cfg) {
                Ok(back) => FbResult {
                    original: p,
                    forward_estimate: fwd,
                    backward_estimate: back,
                    fb_error: p.distance(&back),
                    status: FbStatus::Ok,
                },
                Err(e) => failed(status_for(e, false), fwd),
            }
        })
        .collect();
    Ok(results)
}

/// Build both pyramids once, then track every point forward and back.
pub fn track_forward_backward(
    prev: &GrayImage,
    next: &GrayImage,
    points: &[Point2],
    cfg: &FlowConfig,
) -> Result<Vec<FbResult>, FlowError> {
    if prev.width() != next.width() || prev.height() != next.height() {
        return Err(FlowError::DimensionMismatch);
    }
    if points.is_empty() {
        return Err(FlowError::EmptyPointList);
    }
    let pp = build_pyramid(prev, cfg)?;
    let np = build_pyramid(next, cfg)?;
    track_forward_backward_pyramids(&pp, &np, points, cfg)
}

/// Keep the Ok results whose forward-backward error is at most the median
/// over Ok results. Returns the kept indices and that median.
pub fn filter_by_median(results: &[FbResult]) -> Result<(Vec<usize>, f64), FlowError> {
    let mut errors: Vec<f64> = results.iter().filter(|r| r.is_ok()).map(|r| r.fb_error).collect();
    if errors.is_empty() {
        return Err(FlowError::NoValidPoints);
    }
    let median = math::median_in_place(&mut errors);
    let kept = results
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_ok() && r.fb_error <= median)
        .map(|(i, _)| i)
        .collect();
    Ok((kept, median))
}
