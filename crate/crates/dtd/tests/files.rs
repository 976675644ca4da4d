use std::fs;
use std::path::Path;

use dtd::error::DtdError;
use dtd::imageio::{load_all_frames, load_frames, read_image, write_pgm};
use dtd::models::{encode_weights, load_cascade_model, load_net_config, load_weights, save_weights, write_json};
use dtd::records::{read_records, write_ground_truth, write_results, FrameRecord, RecordStatus};
use dtd_core::detector::ModelError;
use dtd_core::net::{CascadeSpec, LandmarkCascade, NetError};
use dtd_core::pipeline::{FrameResult, FrameStatus, StageTimings, TimingSummary};
use dtd_core::synth::{face_cascade, FacePose, SyntheticSceneSpec};
use dtd_core::{BoundingBox, GrayImage, LandmarkSet, Point2};
use proptest::prelude::*;

fn pgm(w: usize, h: usize, fill: u8) -> Vec<u8> {
    let mut b = format!("P5\n{w} {h}\n255\n").into_bytes();
    b.extend(std::iter::repeat_n(fill, w * h));
    b
}

fn write_png(path: &Path, w: u32, h: u32, color: png::ColorType, depth: png::BitDepth, data: &[u8]) {
    let f = fs::File::create(path).unwrap();
    let mut enc = png::Encoder::new(f, w, h);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.write_header().unwrap().write_image_data(data).unwrap();
}

#[test]
fn directory_is_read_in_name_order_and_other_files_ignored() {
    let dir = tempfile::tempdir().unwrap();
    for (name, v) in [("c.pgm", 30u8), ("a.pgm", 10), ("b.pgm", 20)] {
        fs::write(dir.path().join(name), pgm(4, 3, v)).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "not a frame").unwrap();
    fs::create_dir(dir.path().join("sub.pgm")).unwrap();
    let frames = load_all_frames(dir.path()).unwrap();
    let firsts: Vec<f32> = frames.iter().map(|f| f.get(0, 0)).collect();
    assert_eq!(firsts, vec![10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
}

#[test]
fn byte_128_reads_as_128_over_255() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.pgm");
    fs::write(&p, pgm(2, 2, 128)).unwrap();
    assert_eq!(read_image(&p).unwrap().get(1, 1), 128.0 / 255.0);
}

#[test]
fn corrupt_header_names_the_file_and_is_reported_lazily() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f0.pgm"), pgm(4, 4, 1)).unwrap();
    fs::write(dir.path().join("f1.pgm"), b"P5\n4 four\n255\n").unwrap();
    let mut src = load_frames(dir.path()).unwrap();
    assert_eq!(src.len(), 2);
    assert!(src.next().unwrap().is_ok());
    match src.next().unwrap() {
        Err(DtdError::UnreadableFile { path, .. }) => assert!(path.ends_with("f1.pgm")),
        other => panic!("unexpected {other:?}"),
    }
    assert!(src.next().is_none());
}

#[test]
fn mixed_dimensions_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.pgm"), pgm(4, 4, 1)).unwrap();
    fs::write(dir.path().join("b.pgm"), pgm(5, 4, 1)).unwrap();
    match load_all_frames(dir.path()) {
        Err(DtdError::MixedDimensions { path, expected, actual }) => {
            assert!(path.ends_with("b.pgm"));
            assert_eq!((expected, actual), ((4, 4), (5, 4)));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn png_variants_become_luma() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_png(&d.join("1.png"), 3, 1, png::ColorType::Grayscale, png::BitDepth::Eight, &[0, 128, 255]);
    write_png(&d.join("2.png"), 3, 1, png::ColorType::Rgb, png::BitDepth::Eight, &[255, 0, 0, 0, 255, 0, 255, 255, 255]);
    write_png(&d.join("3.png"), 3, 1, png::ColorType::Grayscale, png::BitDepth::Sixteen, &[0, 0, 128, 0, 255, 255]);
    write_png(&d.join("4.png"), 3, 1, png::ColorType::GrayscaleAlpha, png::BitDepth::Eight, &[64, 255, 0, 0, 255, 9]);
    let f = load_all_frames(d).unwrap();
    assert_eq!(f[0].get(1, 0), 128.0 / 255.0);
    assert!((f[1].get(0, 0) - 0.299).abs() < 1e-6);
    assert!((f[1].get(1, 0) - 0.587).abs() < 1e-6);
    assert!((f[1].get(2, 0) - 1.0).abs() < 1e-6);
    assert_eq!(f[2].get(1, 0), 128.0 / 255.0);
    assert_eq!(f[2].get(2, 0), 1.0);
    assert_eq!(f[3].get(0, 0), 64.0 / 255.0);
}

#[test]
fn pgm_and_png_mix_in_one_sequence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("f0.pgm"), pgm(2, 1, 7)).unwrap();
    write_png(&dir.path().join("f1.PNG"), 2, 1, png::ColorType::Grayscale, png::BitDepth::Eight, &[9, 9]);
    let f = load_all_frames(dir.path()).unwrap();
    assert_eq!(f.len(), 2);
    assert_eq!(f[1].get(0, 0), 9.0 / 255.0);
}

#[test]
fn written_pgm_reads_back_identically() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::from_fn(9, 4, |x, y| ((x * 29 + y * 71) % 256) as f32 / 255.0);
    let p = dir.path().join("x.pgm");
    write_pgm(&p, &img).unwrap();
    assert_eq!(read_image(&p).unwrap(), img);
}

#[test]
fn weights_file_save_load_save_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let c = LandmarkCascade::init(CascadeSpec::toy(), 11).unwrap();
    let (a, b) = (dir.path().join("a.bin"), dir.path().join("b.bin"));
    save_weights(&a, &c).unwrap();
    let loaded = load_weights(&a, &CascadeSpec::toy()).unwrap();
    save_weights(&b, &loaded).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(encode_weights(&loaded).unwrap(), fs::read(&a).unwrap());
    let wrong = load_weights(&a, &CascadeSpec::default_architecture());
    assert!(matches!(wrong, Err(DtdError::BadWeights { .. })));
}

#[test]
fn detector_cascade_json_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("cascade.json");
    write_json(&p, &face_cascade()).unwrap();
    assert_eq!(load_cascade_model(&p).unwrap(), face_cascade());
    let mut broken = face_cascade();
    broken.stages.clear();
    write_json(&p, &broken).unwrap();
    assert!(matches!(load_cascade_model(&p), Err(DtdError::Model(ModelError::NoStages))));
    fs::write(&p, "{ not json").unwrap();
    assert!(matches!(load_cascade_model(&p), Err(DtdError::Json { .. })));
}

#[test]
fn net_config_json_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("net.json");
    for spec in [CascadeSpec::toy(), CascadeSpec::default_architecture()] {
        write_json(&p, &spec).unwrap();
        assert_eq!(load_net_config(&p).unwrap(), spec);
    }
    let mut bad = CascadeSpec::toy();
    bad.networks.pop();
    write_json(&p, &bad).unwrap();
    assert!(matches!(load_net_config(&p), Err(DtdError::Net(NetError::InvalidSpec))));
}

#[test]
fn ground_truth_file_mirrors_records_without_timings() {
    let dir = tempfile::tempdir().unwrap();
    let pose = FacePose { cx: 100.0, cy: 80.0, size: 60.0 };
    let scene = SyntheticSceneSpec::stationary(200, 160, 4, pose, 3).with_occlusion(1, 3);
    let truth: Vec<_> = (0..4).map(|t| scene.truth(t)).collect();
    let p = dir.path().join("gt.jsonl");
    write_ground_truth(&p, &truth).unwrap();
    let text = fs::read_to_string(&p).unwrap();
    assert!(!text.contains("timings") && !text.contains("summary"));
    let back = read_records(&p).unwrap();
    assert!(back.summary.is_none());
    let statuses: Vec<_> = back.records.iter().map(|r| r.status).collect();
    use RecordStatus::*;
    assert_eq!(statuses, vec![Visible, Occluded, Occluded, Visible]);
    assert_eq!(back.records[0].landmark_set(), Some(pose.landmarks()));
    assert_eq!(back.records[2].bounding_box(), Some(pose.bbox()));
}

fn arb_result() -> impl Strategy<Value = FrameResult> {
    (
        0usize..4,
        proptest::array::uniform4(0.0..1e3f64),
        proptest::array::uniform10(-50.0..2000.0f64),
        proptest::array::uniform6(0.0..300.0f64),
        0usize..81,
    )
        .prop_map(|(s, b, l, t, kept)| {
            let status = FrameStatus::ALL[s];
            let lm = LandmarkSet::new([0, 1, 2, 3, 4].map(|i| Point2::new(l[2 * i], l[2 * i + 1])));
            FrameResult {
                frame_index: 0,
                bbox: (status != FrameStatus::Lost).then(|| BoundingBox { x: b[0], y: b[1], w: b[2] + 1.0, h: b[3] + 1.0 }),
                landmarks: (status != FrameStatus::Lost).then_some(lm),
                status,
                timings: StageTimings { track: t[0], box_estimate: t[1], local_detect: t[2], global_detect: t[3], landmark_net: t[4], total: t[5] },
                points_kept: kept,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn results_round_trip_and_summary_matches_recomputation(
        mut results in proptest::collection::vec(arb_result(), 0..30)
    ) {
        for (i, r) in results.iter_mut().enumerate() {
            r.frame_index = i;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        write_results(&p, &results).unwrap();
        let back = read_records(&p).unwrap();
        let expected: Vec<FrameRecord> = results.iter().map(FrameRecord::from_result).collect();
        prop_assert_eq!(&back.records, &expected);
        let summary = back.summary.unwrap();
        prop_assert_eq!(summary, TimingSummary::of(&results));

        // Independent pass over the raw text.
        let mut totals = Vec::new();
        for line in fs::read_to_string(&p).unwrap().lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            if let Some(t) = v.get("timings") {
                totals.push(t["total"].as_f64().unwrap());
            }
        }
        prop_assert_eq!(totals.len(), results.len());
        let mean = if totals.is_empty() { 0.0 } else { totals.iter().sum::<f64>() / totals.len() as f64 };
        prop_assert!((summary.total.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
        prop_assert_eq!(summary.frames, results.len());
    }
}
