//! Per-frame detection-tracking-detection state machine.
//!
//! The first frame (and any frame after the face was lost) goes through a
//! full-frame cascade scan. Every other frame tracks an 80-point cloud seeded
//! from the previous landmarks, estimates the new box from the surviving
//! points, confirms it with a local scan, and re-runs the landmark cascade
//! on it. A failure anywhere falls back to one full-frame scan.

use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::box_estimator::{estimate_box, generate_grid_points, DEFAULT_MIN_SUPPORT};
use crate::detector::{detect_global, validate_local, CascadeModel, DetectParams, LocalValidation};
use crate::flow::{build_pyramid, filter_by_median, track_forward_backward_pyramids, FlowConfig, ImagePyramid};
use crate::geometry::{BoundingBox, LandmarkSet, Point2};
use crate::image::GrayImage;
use crate::math;
use crate::net::LandmarkCascade;

/// Monotonic time source, in milliseconds.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that never advances; every timing comes out 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

impl<C: Clock + ?Sized> Clock for &C {
    fn now_ms(&self) -> f64 {
        (**self).now_ms()
    }
}

/// Everything the pipeline needs besides frames.
#[derive(Debug, Clone)]
pub struct Models {
    pub detector: CascadeModel,
    pub detect_params: DetectParams,
    pub flow: FlowConfig,
    pub landmarks: LandmarkCascade,
    /// Fewest filtered point pairs the box estimate may rest on.
    pub min_support: usize,
}

impl Models {
    pub fn new(detector: CascadeModel, landmarks: LandmarkCascade) -> Self {
        Self {
            detector,
            detect_params: DetectParams::default(),
            flow: FlowConfig::default(),
            landmarks,
            min_support: DEFAULT_MIN_SUPPORT,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Mode {
    Uninitialized,
    Tracking,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum FrameStatus {
    DetectedGlobal,
    TrackedValidated,
    RecoveredGlobal,
    Lost,
}

impl FrameStatus {
    pub const ALL: [FrameStatus; 4] =
        [FrameStatus::DetectedGlobal, FrameStatus::TrackedValidated, FrameStatus::RecoveredGlobal, FrameStatus::Lost];
}

/// Per-stage wall time in milliseconds. Stages that did not run are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StageTimings {
    pub track: f64,
    pub box_estimate: f64,
    pub local_detect: f64,
    pub global_detect: f64,
    pub landmark_net: f64,
    pub total: f64,
}

impl StageTimings {
    pub const NAMES: [&'static str; 6] = ["track", "box_estimate", "local_detect", "global_detect", "landmark_net", "total"];

    pub fn as_array(&self) -> [f64; 6] {
        [self.track, self.box_estimate, self.local_detect, self.global_detect, self.landmark_net, self.total]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FrameResult {
    pub frame_index: usize,
    pub bbox: Option<BoundingBox>,
    /// Absent whenever `status` is `Lost`.
    pub landmarks: Option<LandmarkSet>,
    pub status: FrameStatus,
    pub timings: StageTimings,
    /// Point pairs that survived forward-backward filtering.
    pub points_kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PipelineError {
    /// An operation was called in a state that forbids it.
    Contract(&'static str),
    EmptySequence,
    DimensionMismatch { frame: usize, expected: (usize, usize), actual: (usize, usize) },
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PipelineError::Contract(what) => write!(f, "contract violation: {what}"),
            PipelineError::EmptySequence => write!(f, "frame sequence is empty"),
            PipelineError::DimensionMismatch { frame, expected, actual } => write!(
                f,
                "frame {frame} is {}x{}, expected {}x{}",
                actual.0, actual.1, expected.0, expected.1
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineState {
    /// Index the next processed frame will get.
    pub frame_index: usize,
    pub bbox: Option<BoundingBox>,
    pub landmarks: Option<LandmarkSet>,
    pub prev_image: Option<GrayImage>,
    pub mode: Mode,
    pub lost_streak: usize,
    /// Pyramid of `prev_image`, kept so it is built once per frame.
    prev_pyramid: Option<ImagePyramid>,
    frame_size: Option<(usize, usize)>,
}

impl Default for PipelineState {
    fn default() -> Self {
        Self {
            frame_index: 0,
            bbox: None,
            landmarks: None,
            prev_image: None,
            mode: Mode::Uninitialized,
            lost_streak: 0,
            prev_pyramid: None,
            frame_size: None,
        }
    }
}

impl PipelineState {
    /// The structural invariants: tracking implies a full memory and a zero
    /// lost streak.
    pub fn is_consistent(&self) -> bool {
        match self.mode {
            Mode::Tracking => {
                self.bbox.is_some() && self.landmarks.is_some() && self.prev_image.is_some() && self.lost_streak == 0
            }
            _ => true,
        }
    }
}

#[derive(Clone, Copy)]
struct Stopwatch(f64);

impl Stopwatch {
    fn start<C: Clock + ?Sized>(clock: &C) -> Self {
        Stopwatch(clock.now_ms())
    }

    fn elapsed<C: Clock + ?Sized>(self, clock: &C) -> f64 {
        (clock.now_ms() - self.0).max(0.0)
    }
}

/// One video stream's tracker.
pub struct Pipeline<'m, C: Clock> {
    models: &'m Models,
    clock: C,
    state: PipelineState,
}

impl<'m, C: Clock> Pipeline<'m, C> {
    pub fn new(models: &'m Models, clock: C) -> Self {
        Self { models, clock, state: PipelineState::default() }
    }

    pub fn state(&self) -> &PipelineState {
        &self.state
    }

    fn check_size(&mut self, img: &GrayImage) -> Result<(), PipelineError> {
        let actual = (img.width(), img.height());
        match self.state.frame_size {
            Some(expected) if expected != actual => {
                Err(PipelineError::DimensionMismatch { frame: self.state.frame_index, expected, actual })
            }
            _ => {
                self.state.frame_size = Some(actual);
                Ok(())
            }
        }
    }

    /// First frame: a full-frame scan. Only valid before anything was found.
    pub fn process_first_frame(&mut self, img: &GrayImage) -> Result<FrameResult, PipelineError> {
        if self.state.mode != Mode::Uninitialized {
            return Err(PipelineError::Contract("process_first_frame needs an uninitialized pipeline"));
        }
        self.check_size(img)?;
        let total = Stopwatch::start(&self.clock);
        let mut timings = StageTimings::default();
        let result = self.global_step(img, FrameStatus::DetectedGlobal, &mut timings);
        Ok(self.finish(img, result, timings, total.elapsed(&self.clock), 0))
    }

    /// Any later frame, in any mode.
    pub fn process_next_frame(&mut self, img: &GrayImage) -> Result<FrameResult, PipelineError> {
        self.check_size(img)?;
        let total = Stopwatch::start(&self.clock);
        let mut timings = StageTimings::default();
        if self.state.mode != Mode::Tracking {
            self.state.prev_pyramid = None;
        }
        let (result, kept) = match self.state.mode {
            Mode::Tracking => {
                let (tracked, kept) = self.tracking_step(img, &mut timings);
                match tracked {
                    Some(found) => (Some((found, FrameStatus::TrackedValidated)), kept),
                    None => (self.global_step(img, FrameStatus::RecoveredGlobal, &mut timings), kept),
                }
            }
            Mode::Lost => (self.global_step(img, FrameStatus::RecoveredGlobal, &mut timings), 0),
            Mode::Uninitialized => (self.global_step(img, FrameStatus::DetectedGlobal, &mut timings), 0),
        };
        Ok(self.finish(img, result, timings, total.elapsed(&self.clock), kept))
    }

    /// Dispatch to the first-frame or next-frame path.
    pub fn process(&mut self, img: &GrayImage) -> Result<FrameResult, PipelineError> {
        if self.state.frame_index == 0 {
            self.process_first_frame(img)
        } else {
            self.process_next_frame(img)
        }
    }

    /// Full-frame detection followed by landmark prediction.
    fn global_step(
        &mut self,
        img: &GrayImage,
        status: FrameStatus,
        timings: &mut StageTimings,
    ) -> Option<((BoundingBox, LandmarkSet), FrameStatus)> {
        let found = global_detect_and_predict(self.models, &self.clock, img, timings)?;
        Some((found, status))
    }

    /// Track, estimate, validate, re-detect landmarks. `None` on any failure.
    fn tracking_step(&mut self, img: &GrayImage, timings: &mut StageTimings) -> (Option<(BoundingBox, LandmarkSet)>, usize) {
        let m = self.models;
        // After this call the cache holds the current frame's pyramid or nothing.
        let cached = self.state.prev_pyramid.take();
        let (Some(prev_box), Some(prev_lm)) = (self.state.bbox, self.state.landmarks) else {
            return (None, 0);
        };

        let sw = Stopwatch::start(&self.clock);
        let tracked = (|| {
            let cloud = generate_grid_points(&prev_lm, &prev_box).ok()?;
            let prev_pyr = match cached {
                Some(p) => p,
                None => build_pyramid(self.state.prev_image.as_ref()?, &m.flow).ok()?,
            };
            let next_pyr = build_pyramid(img, &m.flow).ok()?;
            let fb = track_forward_backward_pyramids(&prev_pyr, &next_pyr, &cloud.points, &m.flow).ok();
            self.state.prev_pyramid = Some(next_pyr);
            let fb = fb?;
            let (kept, _) = filter_by_median(&fb).ok()?;
            let pairs: Vec<(Point2, Point2)> = kept.iter().map(|&i| (fb[i].original, fb[i].forward_estimate)).collect();
            Some(pairs)
        })();
        timings.track = sw.elapsed(&self.clock);
        let Some(pairs) = tracked else {
            return (None, 0);
        };
        let kept = pairs.len();

        let sw = Stopwatch::start(&self.clock);
        let estimate = estimate_box(&prev_box, &pairs, m.min_support);
        timings.box_estimate = sw.elapsed(&self.clock);
        let Ok(estimate) = estimate else {
            return (None, kept);
        };

        let sw = Stopwatch::start(&self.clock);
        let verdict = validate_local(img, &m.detector, &m.detect_params, &estimate.bbox);
        timings.local_detect = sw.elapsed(&self.clock);
        let LocalValidation::Validated(bbox) = verdict else {
            return (None, kept);
        };

        let sw = Stopwatch::start(&self.clock);
        let lm = m.landmarks.predict(img, &bbox);
        timings.landmark_net = sw.elapsed(&self.clock);
        (lm.ok().map(|lm| (bbox, lm)), kept)
    }

    fn finish(
        &mut self,
        img: &GrayImage,
        result: Option<((BoundingBox, LandmarkSet), FrameStatus)>,
        mut timings: StageTimings,
        total: f64,
        points_kept: usize,
    ) -> FrameResult {
        timings.total = total;
        let frame_index = self.state.frame_index;
        self.state.frame_index += 1;
        match result {
            Some(((bbox, lm), status)) => {
                self.state.bbox = Some(bbox);
                self.state.landmarks = Some(lm);
                self.state.prev_image = Some(img.clone());
                self.state.mode = Mode::Tracking;
                self.state.lost_streak = 0;
                FrameResult { frame_index, bbox: Some(bbox), landmarks: Some(lm), status, timings, points_kept }
            }
            None => {
                self.state.prev_pyramid = None;
                if self.state.mode == Mode::Tracking {
                    self.state.mode = Mode::Lost;
                }
                self.state.lost_streak += 1;
                FrameResult { frame_index, bbox: None, landmarks: None, status: FrameStatus::Lost, timings, points_kept }
            }
        }
    }

}

fn global_detect_and_predict<C: Clock>(
    m: &Models,
    clock: &C,
    img: &GrayImage,
    timings: &mut StageTimings,
) -> Option<(BoundingBox, LandmarkSet)> {
    let sw = Stopwatch::start(clock);
    let det = detect_global(img, &m.detector, &m.detect_params);
    timings.global_detect = sw.elapsed(clock);
    let bbox = det?.bbox;
    let sw = Stopwatch::start(clock);
    let lm = m.landmarks.predict(img, &bbox);
    timings.landmark_net = sw.elapsed(clock);
    Some((bbox, lm.ok()?))
}

/// Run the tracker over a whole sequence.
pub fn run<'a, C: Clock>(
    frames: impl IntoIterator<Item = &'a GrayImage>,
    models: &Models,
    clock: C,
) -> Result<Vec<FrameResult>, PipelineError> {
    let mut p = Pipeline::new(models, clock);
    let mut out = Vec::new();
    for img in frames {
        out.push(p.process(img)?);
    }
    if out.is_empty() {
        return Err(PipelineError::EmptySequence);
    }
    Ok(out)
}

/// Frame-by-frame comparison method: a full-frame scan and the landmark
/// cascade on every frame, with no state carried between frames.
pub struct Baseline<'m, C: Clock> {
    models: &'m Models,
    clock: C,
    frame_index: usize,
    frame_size: Option<(usize, usize)>,
}

impl<'m, C: Clock> Baseline<'m, C> {
    pub fn new(models: &'m Models, clock: C) -> Self {
        Self { models, clock, frame_index: 0, frame_size: None }
    }

    pub fn step(&mut self, img: &GrayImage) -> Result<FrameResult, PipelineError> {
        let actual = (img.width(), img.height());
        if let Some(expected) = self.frame_size {
            if expected != actual {
                return Err(PipelineError::DimensionMismatch { frame: self.frame_index, expected, actual });
            }
        }
        self.frame_size = Some(actual);
        let total = Stopwatch::start(&self.clock);
        let mut timings = StageTimings::default();
        let found = global_detect_and_predict(self.models, &self.clock, img, &mut timings);
        timings.total = total.elapsed(&self.clock);
        let frame_index = self.frame_index;
        self.frame_index += 1;
        Ok(match found {
            Some((bbox, lm)) => FrameResult {
                frame_index,
                bbox: Some(bbox),
                landmarks: Some(lm),
                status: FrameStatus::DetectedGlobal,
                timings,
                points_kept: 0,
            },
            None => FrameResult { frame_index, bbox: None, landmarks: None, status: FrameStatus::Lost, timings, points_kept: 0 },
        })
    }
}

pub fn run_baseline_frame_by_frame<'a, C: Clock>(
    frames: impl IntoIterator<Item = &'a GrayImage>,
    models: &Models,
    clock: C,
) -> Result<Vec<FrameResult>, PipelineError> {
    let mut b = Baseline::new(models, clock);
    let mut out = Vec::new();
    for img in frames {
        out.push(b.step(img)?);
    }
    if out.is_empty() {
        return Err(PipelineError::EmptySequence);
    }
    Ok(out)
}

/// Mean, median and 95th percentile (nearest rank) of one stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StageStats {
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
}

impl StageStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        let n = sorted.len();
        let rank = math::ceil_to_usize(0.95 * n as f64).clamp(1, n);
        Self { mean: values.iter().sum::<f64>() / n as f64, median: math::median(&sorted), p95: sorted[rank - 1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StatusCounts {
    pub detected_global: usize,
    pub tracked_validated: usize,
    pub recovered_global: usize,
    pub lost: usize,
}

impl StatusCounts {
    pub fn get(&self, s: FrameStatus) -> usize {
        match s {
            FrameStatus::DetectedGlobal => self.detected_global,
            FrameStatus::TrackedValidated => self.tracked_validated,
            FrameStatus::RecoveredGlobal => self.recovered_global,
            FrameStatus::Lost => self.lost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct TimingSummary {
    pub frames: usize,
    pub track: StageStats,
    pub box_estimate: StageStats,
    pub local_detect: StageStats,
    pub global_detect: StageStats,
    pub landmark_net: StageStats,
    pub total: StageStats,
    pub status_counts: StatusCounts,
}

impl TimingSummary {
    pub fn of(results: &[FrameResult]) -> Self {
        let column = |f: fn(&StageTimings) -> f64| -> StageStats {
            let v: Vec<f64> = results.iter().map(|r| f(&r.timings)).collect();
            StageStats::of(&v)
        };
        let mut counts = StatusCounts::default();
        for r in results {
            match r.status {
                FrameStatus::DetectedGlobal => counts.detected_global += 1,
                FrameStatus::TrackedValidated => counts.tracked_validated += 1,
                FrameStatus::RecoveredGlobal => counts.recovered_global += 1,
                FrameStatus::Lost => counts.lost += 1,
            }
        }
        Self {
            frames: results.len(),
            track: column(|t| t.track),
            box_estimate: column(|t| t.box_estimate),
            local_detect: column(|t| t.local_detect),
            global_detect: column(|t| t.global_detect),
            landmark_net: column(|t| t.landmark_net),
            total: column(|t| t.total),
            status_counts: counts,
        }
    }

    pub fn stages(&self) -> [(&'static str, StageStats); 6] {
        [
            ("track", self.track),
            ("box_estimate", self.box_estimate),
            ("local_detect", self.local_detect),
            ("global_detect", self.global_detect),
            ("landmark_net", self.landmark_net),
            ("total", self.total),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{center_predicting_weights, CascadeSpec};
    use crate::synth::{face_cascade, FacePose, SyntheticSceneSpec};
    use alloc::vec;

    fn models() -> Models {
        let spec = CascadeSpec::toy();
        let w = center_predicting_weights(&spec).unwrap();
        Models::new(face_cascade(), LandmarkCascade::new(spec, w).unwrap())
    }

    fn scene() -> SyntheticSceneSpec {
        SyntheticSceneSpec::stationary(320, 240, 3, FacePose { cx: 160.0, cy: 120.0, size: 80.0 }, 7)
    }

    #[test]
    fn first_frame_detects_planted_face() {
        let m = models();
        let s = scene();
        let mut p = Pipeline::new(&m, FrozenClock);
        let r = p.process(&s.render_frame(0)).unwrap();
        assert_eq!(r.status, FrameStatus::DetectedGlobal);
        assert!(crate::geometry::bbox_iou(&r.bbox.unwrap(), &s.truth(0).bbox) >= 0.5);
        assert_eq!(p.state().mode, Mode::Tracking);
        assert!(p.state().is_consistent());
        assert_eq!(p.process_first_frame(&s.render_frame(1)), Err(PipelineError::Contract("process_first_frame needs an uninitialized pipeline")));
    }

    #[test]
    fn blank_first_frame_stays_uninitialized() {
        let m = models();
        let mut p = Pipeline::new(&m, FrozenClock);
        let r = p.process(&GrayImage::filled(200, 150, 0.5)).unwrap();
        assert_eq!(r.status, FrameStatus::Lost);
        assert!(r.landmarks.is_none());
        assert_eq!(p.state().mode, Mode::Uninitialized);
    }

    #[test]
    fn identical_frames_track() {
        let m = models();
        let f = scene().render_frame(0);
        let results = run(vec![&f, &f, &f], &m, FrozenClock).unwrap();
        assert_eq!(results[0].status, FrameStatus::DetectedGlobal);
        for r in &results[1..] {
            assert_eq!(r.status, FrameStatus::TrackedValidated);
            let (a, b) = (r.bbox.unwrap(), results[0].bbox.unwrap());
            assert!((a.x - b.x).abs() < 1.0 && (a.y - b.y).abs() < 1.0 && (a.w - b.w).abs() < 1.0);
        }
    }

    #[test]
    fn blank_frame_loses_then_recovers() {
        let m = models();
        let f = scene().render_frame(0);
        let blank = GrayImage::filled(320, 240, 0.5);
        let results = run(vec![&f, &blank, &blank, &f], &m, FrozenClock).unwrap();
        let st: Vec<FrameStatus> = results.iter().map(|r| r.status).collect();
        assert_eq!(st, vec![FrameStatus::DetectedGlobal, FrameStatus::Lost, FrameStatus::Lost, FrameStatus::RecoveredGlobal]);
        assert!(results[1].landmarks.is_none());
    }

    #[test]
    fn run_errors() {
        let m = models();
        assert_eq!(run(Vec::<&GrayImage>::new(), &m, FrozenClock), Err(PipelineError::EmptySequence));
        let a = GrayImage::filled(100, 100, 0.5);
        let b = GrayImage::filled(100, 90, 0.5);
        assert!(matches!(run(vec![&a, &b], &m, FrozenClock), Err(PipelineError::DimensionMismatch { frame: 1, .. })));
        assert!(matches!(
            run_baseline_frame_by_frame(vec![&a, &b], &m, FrozenClock),
            Err(PipelineError::DimensionMismatch { frame: 1, .. })
        ));
    }

    #[test]
    fn stage_stats() {
        let s = StageStats::of(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.p95, 4.0);
        assert_eq!(StageStats::of(&[]), StageStats::default());
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(StageStats::of(&v).p95, 95.0);
    }
}
