//! Points, boxes and the five-point landmark set shared by every stage.

use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        crate::math::hypot(self.x - other.x, self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryError {
    /// Width or height not strictly positive (or not finite).
    InvalidBox,
    /// The box and the frame share no area.
    NoOverlap,
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidBox => write!(f, "bounding box must have positive finite size"),
            GeometryError::NoOverlap => write!(f, "bounding box does not overlap the frame"),
        }
    }
}

/// Axis-aligned box in frame coordinates. Sub-pixel: boxes are only rounded
/// when a patch is rasterized.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        let b = Self { x, y, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(GeometryError::InvalidBox)
        }
    }

    pub fn is_valid(&self) -> bool {
        self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self { x: cx - 0.5 * w, y: cy - 0.5 * h, w, h }
    }

    pub fn center(&self) -> Point2 {
        Point2::new(self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn short_side(&self) -> f64 {
        self.w.min(self.h)
    }

    /// Same center, both sides multiplied by `factor`.
    pub fn scaled_about_center(&self, factor: f64) -> Self {
        let c = self.center();
        Self::from_center(c.x, c.y, self.w * factor, self.h * factor)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self { x: self.x + dx, y: self.y + dy, ..*self }
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Overlap rectangle, `None` when the overlap has no area.
    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(BoundingBox { x: x0, y: y0, w: x1 - x0, h: y1 - y0 })
        } else {
            None
        }
    }
}

/// Intersection over union; 0 for disjoint boxes.
pub fn bbox_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    if a == b {
        return 1.0;
    }
    match a.intersection(b) {
        Some(i) => {
            let inter = i.area();
            let union = a.area() + b.area() - inter;
            (inter / union).clamp(0.0, 1.0)
        }
        None => 0.0,
    }
}

/// Intersection of `b` with the frame `[0, frame_w] x [0, frame_h]`.
pub fn clamp_bbox(b: &BoundingBox, frame_w: f64, frame_h: f64) -> Result<BoundingBox, GeometryError> {
    let frame = BoundingBox { x: 0.0, y: 0.0, w: frame_w, h: frame_h };
    b.intersection(&frame).ok_or(GeometryError::NoOverlap)
}

/// Semantic index into a [`LandmarkSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Landmark {
    LeftEye = 0,
    RightEye = 1,
    Nose = 2,
    LeftMouth = 3,
    RightMouth = 4,
}

impl Landmark {
    pub const ALL: [Landmark; 5] = [
        Landmark::LeftEye,
        Landmark::RightEye,
        Landmark::Nose,
        Landmark::LeftMouth,
        Landmark::RightMouth,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Label after a horizontal flip: left and right swap, the nose stays.
    pub fn mirrored(self) -> Landmark {
        match self {
            Landmark::LeftEye => Landmark::RightEye,
            Landmark::RightEye => Landmark::LeftEye,
            Landmark::Nose => Landmark::Nose,
            Landmark::LeftMouth => Landmark::RightMouth,
            Landmark::RightMouth => Landmark::LeftMouth,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Landmark::LeftEye => "LE",
            Landmark::RightEye => "RE",
            Landmark::Nose => "N",
            Landmark::LeftMouth => "LM",
            Landmark::RightMouth => "RM",
        }
    }
}

/// Five facial points in the fixed order LE, RE, N, LM, RM.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct LandmarkSet {
    pub points: [Point2; 5],
}

impl LandmarkSet {
    pub const fn new(points: [Point2; 5]) -> Self {
        Self { points }
    }

    pub fn get(&self, lm: Landmark) -> Point2 {
        self.points[lm.index()]
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(Point2::is_finite)
    }

    pub fn map(&self, f: impl Fn(Point2) -> Point2) -> LandmarkSet {
        let mut out = *self;
        for p in out.points.iter_mut() {
            *p = f(*p);
        }
        out
    }

    /// Root of the mean squared point distance.
    pub fn rms_distance(&self, other: &LandmarkSet) -> f64 {
        let sum: f64 = self
            .points
            .iter()
            .zip(other.points.iter())
            .map(|(a, b)| {
                let d = a.distance(b);
                d * d
            })
            .sum();
        crate::math::sqrt(sum / 5.0)
    }
}

/// Box-relative coordinates: the box's top-left is (0,0), bottom-right (1,1).
pub fn landmarks_to_normalized(lm: &LandmarkSet, b: &BoundingBox) -> [Point2; 5] {
    let mut out = [Point2::default(); 5];
    for (o, p) in out.iter_mut().zip(lm.points.iter()) {
        *o = Point2::new((p.x - b.x) / b.w, (p.y - b.y) / b.h);
    }
    out
}

pub fn normalized_to_landmarks(norm: &[Point2; 5], b: &BoundingBox) -> LandmarkSet {
    let mut out = [Point2::default(); 5];
    for (o, p) in out.iter_mut().zip(norm.iter()) {
        *o = Point2::new(b.x + p.x * b.w, b.y + p.y * b.h);
    }
    LandmarkSet::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h).unwrap()
    }

    /// Rasterize both boxes on a 0.01 px grid and count shared cells.
    fn iou_by_counting(a: &BoundingBox, b: &BoundingBox, res: f64) -> f64 {
        let x0 = a.x.min(b.x);
        let y0 = a.y.min(b.y);
        let x1 = a.right().max(b.right());
        let y1 = a.bottom().max(b.bottom());
        let nx = ((x1 - x0) / res).round() as usize;
        let ny = ((y1 - y0) / res).round() as usize;
        let inside = |r: &BoundingBox, x: f64, y: f64| x >= r.x && x < r.right() && y >= r.y && y < r.bottom();
        let (mut inter, mut uni) = (0u64, 0u64);
        for j in 0..ny {
            let y = y0 + (j as f64 + 0.5) * res;
            for i in 0..nx {
                let x = x0 + (i as f64 + 0.5) * res;
                let (ia, ib) = (inside(a, x, y), inside(b, x, y));
                inter += (ia && ib) as u64;
                uni += (ia || ib) as u64;
            }
        }
        inter as f64 / uni as f64
    }

    #[test]
    fn iou_identity_and_disjoint() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        assert_eq!(bbox_iou(&a, &a), 1.0);
        assert_eq!(bbox_iou(&a, &bx(20.0, 20.0, 5.0, 5.0)), 0.0);
    }

    #[test]
    fn iou_half_overlap_matches_counting() {
        let a = bx(0.0, 0.0, 10.0, 10.0);
        let b = bx(5.0, 0.0, 10.0, 10.0);
        let oracle = iou_by_counting(&a, &b, 0.01);
        assert!((oracle - 1.0 / 3.0).abs() < 1e-9);
        assert!((bbox_iou(&a, &b) - oracle).abs() < 1e-9);
    }

    #[test]
    fn clamp_cases() {
        let inside = bx(10.0, 10.0, 20.0, 20.0);
        assert_eq!(clamp_bbox(&inside, 100.0, 100.0).unwrap(), inside);
        assert_eq!(
            clamp_bbox(&bx(-5.0, -5.0, 20.0, 20.0), 100.0, 100.0).unwrap(),
            bx(0.0, 0.0, 15.0, 15.0)
        );
        assert_eq!(
            clamp_bbox(&bx(200.0, 10.0, 20.0, 20.0), 100.0, 100.0),
            Err(GeometryError::NoOverlap)
        );
        // Touching the edge only is degenerate.
        assert_eq!(
            clamp_bbox(&bx(100.0, 10.0, 20.0, 20.0), 100.0, 100.0),
            Err(GeometryError::NoOverlap)
        );
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert_eq!(BoundingBox::new(0.0, 0.0, 0.0, 5.0), Err(GeometryError::InvalidBox));
        assert_eq!(BoundingBox::new(0.0, 0.0, 5.0, -1.0), Err(GeometryError::InvalidBox));
        assert_eq!(BoundingBox::new(f64::NAN, 0.0, 5.0, 5.0), Err(GeometryError::InvalidBox));
    }

    #[test]
    fn normalize_corner_and_center() {
        let b = bx(10.0, 20.0, 40.0, 80.0);
        let mut pts = [Point2::new(10.0, 20.0); 5];
        pts[1] = b.center();
        let n = landmarks_to_normalized(&LandmarkSet::new(pts), &b);
        assert_eq!(n[0], Point2::new(0.0, 0.0));
        assert_eq!(n[1], Point2::new(0.5, 0.5));
    }

    #[test]
    fn mirrored_labels_are_an_involution() {
        for lm in Landmark::ALL {
            assert_eq!(lm.mirrored().mirrored(), lm);
        }
        assert_eq!(Landmark::Nose.mirrored(), Landmark::Nose);
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (-100.0..100.0f64, -100.0..100.0f64, 0.5..80.0f64, 0.5..80.0f64)
            .prop_map(|(x, y, w, h)| bx(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = bbox_iou(&a, &b);
            prop_assert_eq!(ab, bbox_iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(bbox_iou(&a, &a), 1.0);
        }

        #[test]
        fn normalize_round_trip(b in arb_box(), coords in proptest::array::uniform10(-200.0..200.0f64)) {
            let mut pts = [Point2::default(); 5];
            for i in 0..5 {
                pts[i] = Point2::new(coords[2 * i], coords[2 * i + 1]);
            }
            let lm = LandmarkSet::new(pts);
            let back = normalized_to_landmarks(&landmarks_to_normalized(&lm, &b), &b);
            for (p, q) in lm.points.iter().zip(back.points.iter()) {
                prop_assert!((p.x - q.x).abs() <= 1e-9 * p.x.abs().max(1.0));
                prop_assert!((p.y - q.y).abs() <= 1e-9 * p.y.abs().max(1.0));
            }
        }

        #[test]
        fn clamp_stays_positive(b in arb_box()) {
            if let Ok(c) = clamp_bbox(&b, 50.0, 40.0) {
                prop_assert!(c.w > 0.0 && c.h > 0.0);
                prop_assert!(c.x >= 0.0 && c.y >= 0.0 && c.right() <= 50.0 && c.bottom() <= 40.0);
            }
        }
    }
}
