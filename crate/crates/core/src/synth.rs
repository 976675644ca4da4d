//! Synthetic face video with analytic ground truth, and the hand-built Haar
//! cascade matched to the rendered face pattern.
//!
//! A face is a bright textured ellipse inscribed in a square box, carrying two
//! dark eye discs, a mid-gray nose wedge and a dark mouth bar at fixed
//! box-relative positions. The landmark ground truth follows from those
//! positions and the per-frame (center, size) of the box.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::detector::{CascadeModel, HaarFeature, Stage, WeakClassifier, WeightedRect};
use crate::geometry::{normalized_to_landmarks, BoundingBox, LandmarkSet, Point2};
use crate::image::GrayImage;
use crate::math;

/// Box-relative landmark positions in LE, RE, N, LM, RM order.
pub const FACE_LANDMARKS: [(f64, f64); 5] = [(0.32, 0.40), (0.68, 0.40), (0.5, 0.62), (0.34, 0.78), (0.66, 0.78)];

const ELLIPSE_CENTER: (f64, f64) = (0.5, 0.5);
const ELLIPSE_RADII: (f64, f64) = (0.44, 0.5);
const EYE_RADIUS: f64 = 0.075;
const NOSE_APEX: (f64, f64) = (0.5, 0.45);
const NOSE_HALF_BASE: f64 = 0.07;
const MOUTH: (f64, f64, f64, f64) = (0.34, 0.75, 0.66, 0.81);

const SKIN: f64 = 0.74;
const EYE: f64 = 0.12;
const NOSE: f64 = 0.45;
const MOUTH_LEVEL: f64 = 0.14;
/// Face texture lattice cells across the face box, and its amplitude.
const FACE_TEXTURE_CELLS: f64 = 24.0;
const FACE_TEXTURE_AMP: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FacePose {
    pub cx: f64,
    pub cy: f64,
    /// Side of the square face box, in pixels.
    pub size: f64,
}

impl FacePose {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::from_center(self.cx, self.cy, self.size, self.size)
    }

    pub fn landmarks(&self) -> LandmarkSet {
        face_landmarks(&self.bbox())
    }
}

/// Ground-truth landmarks for a face rendered in `face_box`.
pub fn face_landmarks(face_box: &BoundingBox) -> LandmarkSet {
    let mut norm = [Point2::default(); 5];
    for (n, &(u, v)) in norm.iter_mut().zip(FACE_LANDMARKS.iter()) {
        *n = Point2::new(u, v);
    }
    normalized_to_landmarks(&norm, face_box)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Occlusion {
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    pub rect: BoundingBox,
}

impl Occlusion {
    pub fn active(&self, frame: usize) -> bool {
        (self.start_frame..self.end_frame).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct SyntheticSceneSpec {
    pub width: usize,
    pub height: usize,
    /// One pose per frame; the frame count is its length.
    pub trajectory: Vec<FacePose>,
    pub texture_seed: u64,
    pub occlusions: Vec<Occlusion>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthError {
    EmptyTrajectory,
    ZeroFrameSize,
    BadPose { frame: usize },
    OcclusionRange { index: usize },
}

impl fmt::Display for SynthError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthError::EmptyTrajectory => write!(f, "trajectory has no frames"),
            SynthError::ZeroFrameSize => write!(f, "frame size must be positive"),
            SynthError::BadPose { frame } => write!(f, "pose at frame {frame} is not finite or has size <= 0"),
            SynthError::OcclusionRange { index } => write!(f, "occlusion {index} has an empty frame range"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameTruth {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub landmarks: LandmarkSet,
    /// False while an occluder covers the face center.
    pub visible: bool,
}

impl SyntheticSceneSpec {
    pub fn num_frames(&self) -> usize {
        self.trajectory.len()
    }

    /// Seeded smooth wander: per-frame steps of at most `max_step` pixels
    /// with inertia, a slow size oscillation of ±4%, and the face kept at
    /// least one face width from every border.
    pub fn wandering(width: usize, height: usize, num_frames: usize, face_size: f64, max_step: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_6a65_6374);
        let margin = 1.5 * face_size;
        let (lo_x, hi_x) = (margin, (width as f64 - margin).max(margin));
        let (lo_y, hi_y) = (margin, (height as f64 - margin).max(margin));
        let mut cx = 0.5 * (lo_x + hi_x);
        let mut cy = 0.5 * (lo_y + hi_y);
        let (mut vx, mut vy) = (0.0f64, 0.0f64);
        let phase = rng.gen_range(0.0..core::f64::consts::TAU);
        let mut trajectory = Vec::with_capacity(num_frames);
        for t in 0..num_frames {
            let size = face_size * (1.0 + 0.04 * math::sin(phase + t as f64 * 0.07));
            trajectory.push(FacePose { cx, cy, size });
            vx = 0.8 * vx + rng.gen_range(-0.4..0.4) * max_step;
            vy = 0.8 * vy + rng.gen_range(-0.4..0.4) * max_step;
            let speed = math::hypot(vx, vy);
            if speed > max_step {
                vx *= max_step / speed;
                vy *= max_step / speed;
            }
            if cx + vx < lo_x || cx + vx > hi_x {
                vx = -vx;
            }
            if cy + vy < lo_y || cy + vy > hi_y {
                vy = -vy;
            }
            cx = (cx + vx).clamp(lo_x, hi_x);
            cy = (cy + vy).clamp(lo_y, hi_y);
        }
        Self { width, height, trajectory, texture_seed: seed, occlusions: Vec::new() }
    }

    /// Same face in every frame.
    pub fn stationary(width: usize, height: usize, num_frames: usize, pose: FacePose, seed: u64) -> Self {
        Self { width, height, trajectory: vec![pose; num_frames], texture_seed: seed, occlusions: Vec::new() }
    }

    /// Cover the face for frames `start..end` with an opaque textured block.
    pub fn with_occlusion(mut self, start: usize, end: usize) -> Self {
        let max = self.trajectory[start.min(self.trajectory.len() - 1)..end.min(self.trajectory.len())]
            .iter()
            .fold(None::<BoundingBox>, |acc, p| {
                let b = p.bbox().scaled_about_center(1.3);
                Some(match acc {
                    None => b,
                    Some(a) => {
                        let x0 = a.x.min(b.x);
                        let y0 = a.y.min(b.y);
                        BoundingBox { x: x0, y: y0, w: a.right().max(b.right()) - x0, h: a.bottom().max(b.bottom()) - y0 }
                    }
                })
            });
        if let Some(rect) = max {
            self.occlusions.push(Occlusion { start_frame: start, end_frame: end, rect });
        }
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.width == 0 || self.height == 0 {
            return Err(SynthError::ZeroFrameSize);
        }
        if self.trajectory.is_empty() {
            return Err(SynthError::EmptyTrajectory);
        }
        for (i, p) in self.trajectory.iter().enumerate() {
            if !(p.cx.is_finite() && p.cy.is_finite() && p.size.is_finite() && p.size > 0.0) {
                return Err(SynthError::BadPose { frame: i });
            }
        }
        for (i, o) in self.occlusions.iter().enumerate() {
            if o.end_frame <= o.start_frame || !o.rect.is_valid() {
                return Err(SynthError::OcclusionRange { index: i });
            }
        }
        Ok(())
    }

    pub fn truth(&self, frame: usize) -> FrameTruth {
        let pose = self.trajectory[frame];
        let bbox = pose.bbox();
        let c = bbox.center();
        let visible = !self.occlusions.iter().any(|o| {
            o.active(frame) && c.x >= o.rect.x && c.x <= o.rect.right() && c.y >= o.rect.y && c.y <= o.rect.bottom()
        });
        FrameTruth { frame_index: frame, bbox, landmarks: pose.landmarks(), visible }
    }

    pub fn background(&self) -> GrayImage {
        render_background(self.width, self.height, self.texture_seed)
    }

    /// Render one frame onto a precomputed background.
    pub fn render_frame_on(&self, background: &GrayImage, frame: usize) -> GrayImage {
        let mut img = background.clone();
        let pose = self.trajectory[frame];
        draw_face(&mut img, &pose.bbox(), self.texture_seed);
        for o in self.occlusions.iter().filter(|o| o.active(frame)) {
            draw_occluder(&mut img, &o.rect, self.texture_seed ^ 0x0cc1);
        }
        img
    }

    pub fn render_frame(&self, frame: usize) -> GrayImage {
        self.render_frame_on(&self.background(), frame)
    }
}

/// Every frame and its ground truth. Deterministic in the spec.
pub fn generate_synthetic_video(spec: &SyntheticSceneSpec) -> Result<(Vec<GrayImage>, Vec<FrameTruth>), SynthError> {
    spec.validate()?;
    let bg = spec.background();
    let frames = (0..spec.num_frames()).map(|t| spec.render_frame_on(&bg, t)).collect();
    let truth = (0..spec.num_frames()).map(|t| spec.truth(t)).collect();
    Ok((frames, truth))
}

#[inline]
fn hash2(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut h = seed
        .wrapping_add((ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D0_49BB_1331_11EB);
    h ^= h >> 31;
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Smoothly interpolated lattice noise in [0,1], lattice spacing 1.
pub fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let xf = math::floor(x);
    let yf = math::floor(y);
    let (ix, iy) = (xf as i64, yf as i64);
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let sx = smooth(x - xf);
    let sy = smooth(y - yf);
    let a = hash2(ix, iy, seed);
    let b = hash2(ix + 1, iy, seed);
    let c = hash2(ix, iy + 1, seed);
    let d = hash2(ix + 1, iy + 1, seed);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

pub fn render_background(width: usize, height: usize, seed: u64) -> GrayImage {
    let s1 = seed.wrapping_mul(31).wrapping_add(1);
    let s2 = seed.wrapping_mul(131).wrapping_add(7);
    GrayImage::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let coarse = value_noise(xf / 40.0, yf / 40.0, s1);
        let fine = value_noise(xf / 7.0, yf / 7.0, s2);
        (0.15 + 0.5 * (0.6 * coarse + 0.4 * fine)) as f32
    })
}

/// Coverage of a shape from a signed distance in pixels (negative inside),
/// with a one-pixel linear ramp.
#[inline]
fn coverage(signed_px: f64) -> f64 {
    (0.5 - signed_px).clamp(0.0, 1.0)
}

/// Intensity of the face pattern at box-relative `(u, v)`, and its alpha.
fn face_sample(u: f64, v: f64, size: f64, seed: u64) -> (f64, f64) {
    let ex = (u - ELLIPSE_CENTER.0) / ELLIPSE_RADII.0;
    let ey = (v - ELLIPSE_CENTER.1) / ELLIPSE_RADII.1;
    let r = math::sqrt(ex * ex + ey * ey);
    let alpha = coverage((r - 1.0) * ELLIPSE_RADII.0 * size);
    if alpha <= 0.0 {
        return (0.0, 0.0);
    }
    let mut value = SKIN;

    for &(lx, ly) in &FACE_LANDMARKS[..2] {
        let d = (math::hypot(u - lx, v - ly) - EYE_RADIUS) * size;
        let c = coverage(d);
        value += (EYE - value) * c;
    }

    // Nose: triangle from the apex down to a base centered on the tip.
    let tip = FACE_LANDMARKS[2];
    if v >= NOSE_APEX.1 - 0.02 && v <= tip.1 + 0.02 {
        let t = ((v - NOSE_APEX.1) / (tip.1 - NOSE_APEX.1)).clamp(0.0, 1.0);
        let half = NOSE_HALF_BASE * t;
        let dx = (u - NOSE_APEX.0).abs() - half;
        let dy = (NOSE_APEX.1 - v).max(v - tip.1);
        let c = coverage(dx.max(dy) * size);
        value += (NOSE - value) * c;
    }

    let (mx0, my0, mx1, my1) = MOUTH;
    let dx = (mx0 - u).max(u - mx1);
    let dy = (my0 - v).max(v - my1);
    value += (MOUTH_LEVEL - value) * coverage(dx.max(dy) * size);

    let tex = value_noise(u * FACE_TEXTURE_CELLS, v * FACE_TEXTURE_CELLS, seed) - 0.5;
    (value + FACE_TEXTURE_AMP * tex, alpha)
}

/// Composite the face pattern for `face_box` into `img`. The texture is
/// attached to the face, so it moves and scales with the box.
pub fn draw_face(img: &mut GrayImage, face_box: &BoundingBox, seed: u64) {
    let tex_seed = seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 0xface;
    let x0 = math::floor(face_box.x - 1.0).max(0.0) as usize;
    let y0 = math::floor(face_box.y - 1.0).max(0.0) as usize;
    let x1 = (math::ceil_to_usize(face_box.right() + 1.0)).min(img.width());
    let y1 = (math::ceil_to_usize(face_box.bottom() + 1.0)).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let u = (x as f64 - face_box.x) / face_box.w;
            let v = (y as f64 - face_box.y) / face_box.h;
            let (value, alpha) = face_sample(u, v, face_box.w, tex_seed);
            if alpha > 0.0 {
                let bg = f64::from(img.get(x, y));
                img.set(x, y, (bg + (value - bg) * alpha).clamp(0.0, 1.0) as f32);
            }
        }
    }
}

fn draw_occluder(img: &mut GrayImage, rect: &BoundingBox, seed: u64) {
    let x0 = math::floor(rect.x).max(0.0) as usize;
    let y0 = math::floor(rect.y).max(0.0) as usize;
    let x1 = math::ceil_to_usize(rect.right()).min(img.width());
    let y1 = math::ceil_to_usize(rect.bottom()).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let n = value_noise(x as f64 / 5.0, y as f64 / 5.0, seed);
            img.set(x, y, (0.35 + 0.2 * n) as f32);
        }
    }
}

/// One face rendered on its own background patch, for network training.
#[derive(Debug, Clone)]
pub struct FaceSample {
    pub image: GrayImage,
    pub face_box: BoundingBox,
    pub landmarks: LandmarkSet,
}

/// A face of random size and sub-pixel placement inside a canvas twice its
/// size, with fresh background and face textures drawn from `rng`.
pub fn random_face_sample<R: Rng>(rng: &mut R, min_size: f64, max_size: f64) -> FaceSample {
    let size = rng.gen_range(min_size..max_size);
    let canvas = (2.0 * size) as usize + 8;
    let seed: u64 = rng.gen();
    let mut image = render_background(canvas, canvas, seed);
    let cx = canvas as f64 * 0.5 + rng.gen_range(-0.1..0.1) * size;
    let cy = canvas as f64 * 0.5 + rng.gen_range(-0.1..0.1) * size;
    let face_box = BoundingBox::from_center(cx, cy, size, size);
    draw_face(&mut image, &face_box, rng.gen());
    FaceSample { image, landmarks: face_landmarks(&face_box), face_box }
}

fn weak(rects: &[(u32, u32, u32, u32, f64)], split: f64) -> WeakClassifier {
    WeakClassifier {
        feature: HaarFeature {
            rects: rects.iter().map(|&(x, y, w, h, weight)| WeightedRect { x, y, w, h, weight }).collect(),
        },
        split,
        left: 0.0,
        right: 1.0,
    }
}

/// Hand-built 24x24 cascade tuned to the synthetic face pattern.
///
/// Features (base-window pixels): forehead over eye band, eye-bridge-eye,
/// cheeks around the nose, mouth over chin, and upper lip over mouth.
pub fn face_cascade() -> CascadeModel {
    let forehead_eyes = [(5, 3, 14, 4, 1.0), (5, 8, 14, 4, -1.0)];
    let eye_bridge_eye = [(5, 8, 5, 3, -1.0), (10, 8, 4, 3, 2.5), (14, 8, 5, 3, -1.0)];
    let cheeks_nose = [(3, 12, 5, 3, 1.0), (10, 12, 4, 3, -2.5), (16, 12, 5, 3, 1.0)];
    let mouth_chin = [(8, 17, 8, 3, -1.0), (8, 20, 8, 3, 1.0)];
    let lip_mouth = [(8, 15, 8, 3, 1.0), (8, 18, 8, 2, -1.5)];
    CascadeModel {
        base_window: 24,
        stages: vec![
            Stage { threshold: 1.0, weak: vec![weak(&forehead_eyes, 40.0)] },
            Stage { threshold: 1.0, weak: vec![weak(&eye_bridge_eye, 35.0)] },
            Stage { threshold: 2.0, weak: vec![weak(&mouth_chin, 18.0), weak(&cheeks_nose, 12.0)] },
            Stage { threshold: 1.0, weak: vec![weak(&lip_mouth, 22.0)] },
        ],
    }
}
