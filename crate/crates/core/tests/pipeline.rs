use std::sync::OnceLock;

use dtd_core::geometry::bbox_iou;
use dtd_core::net::{center_predicting_weights, train_cascade, CascadeSpec, CascadeTrainConfig, LandmarkCascade};
use dtd_core::pipeline::*;
use dtd_core::synth::{face_cascade, render_background, FacePose, SyntheticSceneSpec};
use dtd_core::GrayImage;
use proptest::prelude::*;

fn trained_models() -> &'static Models {
    static M: OnceLock<Models> = OnceLock::new();
    M.get_or_init(|| {
        let (cascade, _) = train_cascade(&CascadeSpec::toy(), &CascadeTrainConfig::default()).unwrap();
        Models::new(face_cascade(), cascade)
    })
}

fn rigged_models() -> &'static Models {
    static M: OnceLock<Models> = OnceLock::new();
    M.get_or_init(|| {
        let spec = CascadeSpec::toy();
        let w = center_predicting_weights(&spec).unwrap();
        Models::new(face_cascade(), LandmarkCascade::new(spec, w).unwrap())
    })
}

#[test]
fn rigid_translation_tracks_accurately() {
    let m = trained_models();
    let p0 = FacePose { cx: 200.0, cy: 150.0, size: 100.0 };
    let p1 = FacePose { cx: 204.0, cy: 152.0, ..p0 };
    let spec = SyntheticSceneSpec { trajectory: vec![p0, p1], ..SyntheticSceneSpec::stationary(400, 300, 2, p0, 5) };
    let frames: Vec<GrayImage> = (0..2).map(|t| spec.render_frame(t)).collect();
    let results = run(&frames, m, FrozenClock).unwrap();
    assert_eq!(results[1].status, FrameStatus::TrackedValidated);
    let rms = results[1].landmarks.unwrap().rms_distance(&spec.truth(1).landmarks);
    assert!(rms <= 2.0, "rms {rms}");
}

#[test]
fn zero_motion_is_a_fixed_point() {
    let m = trained_models();
    let pose = FacePose { cx: 200.0, cy: 150.0, size: 100.0 };
    let f = SyntheticSceneSpec::stationary(400, 300, 1, pose, 8).render_frame(0);
    let results = run([&f, &f], m, FrozenClock).unwrap();
    assert_eq!(results[1].status, FrameStatus::TrackedValidated);
    let (a, b) = (results[0].landmarks.unwrap(), results[1].landmarks.unwrap());
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!(p.distance(q) < 0.5);
    }
}

#[test]
fn smooth_sequence_mostly_tracked() {
    let m = trained_models();
    let spec = SyntheticSceneSpec::wandering(480, 360, 50, 90.0, 5.0, 21);
    let frames: Vec<GrayImage> = (0..50).map(|t| spec.render_frame(t)).collect();
    let results = run(&frames, m, FrozenClock).unwrap();
    let tracked = results.iter().filter(|r| r.status == FrameStatus::TrackedValidated).count();
    assert!(tracked >= 48, "{tracked} tracked");
    let baseline = run_baseline_frame_by_frame(&frames, m, FrozenClock).unwrap();
    assert_eq!(baseline[0].bbox, results[0].bbox);
    assert_eq!(baseline[0].landmarks, results[0].landmarks);
}

#[test]
fn face_removed_goes_lost_and_single_frame_runs() {
    let m = rigged_models();
    let pose = FacePose { cx: 160.0, cy: 120.0, size: 80.0 };
    let f = SyntheticSceneSpec::stationary(320, 240, 1, pose, 3).render_frame(0);
    let blank = render_background(320, 240, 3);
    let results = run([&f, &blank], m, FrozenClock).unwrap();
    assert_eq!(results[1].status, FrameStatus::Lost);
    let one = run([&f], m, FrozenClock).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].status, FrameStatus::DetectedGlobal);
    assert!(bbox_iou(&one[0].bbox.unwrap(), &pose.bbox()) >= 0.5);
}

#[test]
fn baseline_on_blank_is_all_lost() {
    let m = rigged_models();
    let blank = GrayImage::filled(200, 160, 0.3);
    let r = run_baseline_frame_by_frame([&blank, &blank, &blank], m, FrozenClock).unwrap();
    assert!(r.iter().all(|r| r.status == FrameStatus::Lost && r.landmarks.is_none()));
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Face(i8, i8),
    Blank,
    Occluded,
}

fn kind() -> impl Strategy<Value = Kind> {
    prop_oneof![
        3 => (-3i8..=3, -3i8..=3).prop_map(|(x, y)| Kind::Face(x, y)),
        1 => Just(Kind::Blank),
        1 => Just(Kind::Occluded),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn state_machine_stays_sound(kinds in proptest::collection::vec(kind(), 1..8)) {
        let m = rigged_models();
        let base = FacePose { cx: 160.0, cy: 120.0, size: 80.0 };
        let bg = render_background(320, 240, 1);
        let mut p = Pipeline::new(m, FrozenClock);
        let mut cx = base.cx;
        let mut cy = base.cy;
        let mut prev_lost = false;
        for k in kinds {
            let (img, face) = match k {
                Kind::Face(dx, dy) => {
                    cx += f64::from(dx);
                    cy += f64::from(dy);
                    let spec = SyntheticSceneSpec::stationary(320, 240, 1, FacePose { cx, cy, ..base }, 1);
                    (spec.render_frame_on(&bg, 0), true)
                }
                Kind::Blank => (bg.clone(), false),
                Kind::Occluded => {
                    let spec = SyntheticSceneSpec::stationary(320, 240, 1, FacePose { cx, cy, ..base }, 1).with_occlusion(0, 1);
                    (spec.render_frame_on(&bg, 0), false)
                }
            };
            let r = p.process(&img).unwrap();
            prop_assert!(p.state().is_consistent());
            if r.status == FrameStatus::Lost {
                prop_assert!(r.landmarks.is_none());
            } else {
                prop_assert!(r.landmarks.is_some() && r.bbox.is_some());
            }
            if face && prev_lost {
                // A visible face right after a loss is picked up immediately.
                prop_assert!(matches!(r.status, FrameStatus::RecoveredGlobal | FrameStatus::DetectedGlobal));
            }
            if !face {
                prop_assert_eq!(r.status, FrameStatus::Lost);
            }
            prev_lost = r.status == FrameStatus::Lost;
            prop_assert_eq!(p.state().mode == Mode::Lost || p.state().mode == Mode::Uninitialized, prev_lost);
        }
    }
}
