use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{BoundingBox, Landmark, LandmarkSet, Point2};
use crate::image::GrayImage;
use crate::math;

/// Rotation used for the two rotated copies, in degrees.
pub const AUGMENT_ANGLE_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFace {
    pub image: GrayImage,
    pub face_box: BoundingBox,
    pub landmarks: LandmarkSet,
}

fn image_center(img: &GrayImage) -> Point2 {
    Point2::new((img.width() - 1) as f64 * 0.5, (img.height() - 1) as f64 * 0.5)
}

fn rotate_point(p: Point2, c: Point2, cos: f64, sin: f64) -> Point2 {
    let (dx, dy) = (p.x - c.x, p.y - c.y);
    Point2::new(c.x + cos * dx - sin * dy, c.y + sin * dx + cos * dy)
}

/// Rotate about the image center by `degrees` (clockwise on screen, since
/// y points down). Pixels that come from outside the source read 0. The box
/// keeps its size and follows its center.
pub fn rotate_sample(face: &LabeledFace, degrees: f64) -> LabeledFace {
    let theta = degrees.to_radians();
    let (cos, sin) = (math::cos(theta), math::sin(theta));
    let c = image_center(&face.image);
    let src = &face.image;
    let image = GrayImage::from_fn(src.width(), src.height(), |x, y| {
        // Inverse map: rotate the output position back by -theta.
        let p = rotate_point(Point2::new(x as f64, y as f64), c, cos, -sin);
        src.sample_or_zero(p.x, p.y) as f32
    });
    let landmarks = face.landmarks.map(|p| rotate_point(p, c, cos, sin));
    let bc = rotate_point(face.face_box.center(), c, cos, sin);
    let face_box = BoundingBox::from_center(bc.x, bc.y, face.face_box.w, face.face_box.h);
    LabeledFace { image, face_box, landmarks }
}

/// Horizontal flip; left and right labels swap.
pub fn mirror_sample(face: &LabeledFace) -> LabeledFace {
    let src = &face.image;
    let w = src.width();
    let image = GrayImage::from_fn(w, src.height(), |x, y| src.get(w - 1 - x, y));
    let flip = (w - 1) as f64;
    let mut points = [Point2::default(); 5];
    for lm in Landmark::ALL {
        let p = face.landmarks.get(lm);
        points[lm.mirrored().index()] = Point2::new(flip - p.x, p.y);
    }
    let b = face.face_box;
    let face_box = BoundingBox { x: flip - b.right(), ..b };
    LabeledFace { image, face_box, landmarks: LandmarkSet::new(points) }
}

/// The original plus its five derived copies: rotated by +5 and -5 degrees,
/// the mirror of each rotation, and the mirror of the original.
pub fn augment(img: &GrayImage, face_box: &BoundingBox, lm: &LandmarkSet) -> Vec<LabeledFace> {
    let original = LabeledFace { image: img.clone(), face_box: *face_box, landmarks: *lm };
    let plus = rotate_sample(&original, AUGMENT_ANGLE_DEG);
    let minus = rotate_sample(&original, -AUGMENT_ANGLE_DEG);
    let plus_m = mirror_sample(&plus);
    let minus_m = mirror_sample(&minus);
    let orig_m = mirror_sample(&original);
    vec![original, plus, minus, plus_m, minus_m, orig_m]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{draw_face, face_landmarks, render_background};

    fn sample() -> LabeledFace {
        let mut image = render_background(90, 80, 3);
        let face_box = BoundingBox::new(20.3, 15.6, 40.0, 40.0).unwrap();
        draw_face(&mut image, &face_box, 4);
        LabeledFace { image, face_box, landmarks: face_landmarks(&face_box) }
    }

    #[test]
    fn six_samples_with_original_first() {
        let s = sample();
        let out = augment(&s.image, &s.face_box, &s.landmarks);
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], s);
    }

    #[test]
    fn mirror_is_involution() {
        let s = sample();
        let back = mirror_sample(&mirror_sample(&s));
        assert_eq!(back.image, s.image);
        for (a, b) in back.landmarks.points.iter().zip(&s.landmarks.points) {
            assert!(a.distance(b) < 1e-9);
        }
        assert!((back.face_box.x - s.face_box.x).abs() < 1e-9);
    }

    #[test]
    fn mirror_swaps_labels() {
        let s = sample();
        let m = mirror_sample(&s);
        let flip = (s.image.width() - 1) as f64;
        let re = s.landmarks.get(Landmark::RightEye);
        assert_eq!(m.landmarks.get(Landmark::LeftEye), Point2::new(flip - re.x, re.y));
        let rm = s.landmarks.get(Landmark::RightMouth);
        assert_eq!(m.landmarks.get(Landmark::LeftMouth), Point2::new(flip - rm.x, rm.y));
        // The rendered face is left-right symmetric in layout, so the left
        // eye of the mirror still sits left of its right eye.
        assert!(m.landmarks.get(Landmark::LeftEye).x < m.landmarks.get(Landmark::RightEye).x);
    }

    #[test]
    fn opposite_rotations_cancel_on_coordinates() {
        let s = sample();
        let back = rotate_sample(&rotate_sample(&s, 5.0), -5.0);
        for (a, b) in back.landmarks.points.iter().zip(&s.landmarks.points) {
            assert!(a.distance(b) < 1e-6);
        }
        let c = back.face_box.center();
        assert!(c.distance(&s.face_box.center()) < 1e-6);
        // Pixels near the middle survive two bilinear passes approximately.
        let (cx, cy) = (45, 40);
        assert!((back.image.get(cx, cy) - s.image.get(cx, cy)).abs() < 0.15);
    }

    #[test]
    fn rotated_landmarks_land_on_rotated_pixels() {
        // A single bright dot must move to the rotated landmark position.
        let mut image = GrayImage::filled(61, 61, 0.0);
        image.set(45, 30, 1.0);
        let p = Point2::new(45.0, 30.0);
        let lm = LandmarkSet::new([p; 5]);
        let s = LabeledFace { image, face_box: BoundingBox::new(20.0, 20.0, 20.0, 20.0).unwrap(), landmarks: lm };
        let r = rotate_sample(&s, 90.0);
        let q = r.landmarks.points[0];
        assert!((q.x - 30.0).abs() < 1e-9 && (q.y - 45.0).abs() < 1e-9);
        assert!(r.image.get(30, 45) > 0.99);
    }
}
