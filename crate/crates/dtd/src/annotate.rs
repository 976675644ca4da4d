use dtd_core::pipeline::FrameResult;
use dtd_core::{BoundingBox, GrayImage, Point2};

const CROSS_ARM: isize = 4;

/// Copy of `img` with the result's box outlined in white and each landmark
/// marked by a black-on-white cross.
pub fn annotate(img: &GrayImage, result: &FrameResult) -> GrayImage {
    let mut out = img.clone();
    if let Some(b) = result.bbox {
        draw_box(&mut out, &b, 1.0);
    }
    if let Some(lm) = result.landmarks {
        for p in lm.points {
            draw_cross(&mut out, p, CROSS_ARM + 1, 1.0);
            draw_cross(&mut out, p, CROSS_ARM, 0.0);
        }
    }
    out
}

fn put(img: &mut GrayImage, x: isize, y: isize, v: f32) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set(x as usize, y as usize, v);
    }
}

fn draw_box(img: &mut GrayImage, b: &BoundingBox, v: f32) {
    let (x0, y0) = (b.x.round() as isize, b.y.round() as isize);
    let (x1, y1) = ((b.right().round() as isize) - 1, (b.bottom().round() as isize) - 1);
    for x in x0..=x1 {
        put(img, x, y0, v);
        put(img, x, y1, v);
    }
    for y in y0..=y1 {
        put(img, x0, y, v);
        put(img, x1, y, v);
    }
}

fn draw_cross(img: &mut GrayImage, p: Point2, arm: isize, v: f32) {
    let (cx, cy) = (p.x.round() as isize, p.y.round() as isize);
    for d in -arm..=arm {
        put(img, cx + d, cy, v);
        put(img, cx, cy + d, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dtd_core::pipeline::{FrameStatus, StageTimings};
    use dtd_core::LandmarkSet;

    #[test]
    fn marks_box_and_landmarks() {
        let img = GrayImage::filled(40, 40, 0.5);
        let r = FrameResult {
            frame_index: 0,
            bbox: Some(BoundingBox { x: 5.0, y: 5.0, w: 30.0, h: 30.0 }),
            landmarks: Some(LandmarkSet::new([Point2::new(20.0, 20.0); 5])),
            status: FrameStatus::DetectedGlobal,
            timings: StageTimings::default(),
            points_kept: 0,
        };
        let a = annotate(&img, &r);
        assert_eq!(a.get(5, 5), 1.0);
        assert_eq!(a.get(34, 20), 1.0);
        assert_eq!(a.get(20, 20), 0.0);
        assert_eq!(a.get(25, 20), 1.0);
        assert_eq!(a.get(10, 10), 0.5);
    }
}
