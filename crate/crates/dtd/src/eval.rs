//! Landmark error of a results file against ground truth.

use std::collections::HashMap;

use serde::Serialize;

use crate::records::{FrameRecord, RecordStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    /// Ground-truth frames with the face in view.
    pub visible_frames: usize,
    /// Visible frames for which the results carry landmarks.
    pub evaluated_frames: usize,
    /// Mean Euclidean landmark error over all evaluated points, pixels.
    pub mean_px: f64,
    /// Root mean square of the same distances, pixels.
    pub rms_px: f64,
    /// Per-frame RMS divided by the true box short side, averaged.
    pub mean_rms_fraction: f64,
}

/// Compare `results` with `truth` frame by frame. Only `Visible` truth
/// frames count; frames missing from the results or without landmarks are
/// skipped and show up as `visible_frames - evaluated_frames`.
pub fn evaluate(results: &[FrameRecord], truth: &[FrameRecord]) -> EvalReport {
    let by_frame: HashMap<usize, &FrameRecord> = results.iter().map(|r| (r.frame_index, r)).collect();
    let mut visible = 0;
    let mut frames = 0;
    let mut points = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut frac_sum = 0.0;
    for t in truth {
        let (Some(true_lm), Some(true_box)) = (t.landmarks, t.bbox) else { continue };
        if t.status != RecordStatus::Visible {
            continue;
        }
        visible += 1;
        let Some(pred) = by_frame.get(&t.frame_index).and_then(|r| r.landmarks) else { continue };
        frames += 1;
        let mut frame_sq = 0.0;
        for (p, q) in pred.iter().zip(&true_lm) {
            let d = (p[0] - q[0]).hypot(p[1] - q[1]);
            sum += d;
            sum_sq += d * d;
            frame_sq += d * d;
            points += 1;
        }
        frac_sum += (frame_sq / 5.0).sqrt() / true_box.w.min(true_box.h);
    }
    let n = points.max(1) as f64;
    EvalReport {
        visible_frames: visible,
        evaluated_frames: frames,
        mean_px: sum / n,
        rms_px: (sum_sq / n).sqrt(),
        mean_rms_fraction: frac_sum / frames.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::BoxRecord;

    fn rec(i: usize, status: RecordStatus, lm: Option<[[f64; 2]; 5]>) -> FrameRecord {
        FrameRecord {
            frame_index: i,
            status,
            bbox: Some(BoxRecord { x: 0.0, y: 0.0, w: 100.0, h: 50.0 }),
            landmarks: lm,
            points_kept: None,
            timings: None,
        }
    }

    #[test]
    fn hand_computed() {
        let zero = [[0.0; 2]; 5];
        let mut shifted = zero;
        shifted[0] = [3.0, 4.0];
        let truth = vec![
            rec(0, RecordStatus::Visible, Some(zero)),
            rec(1, RecordStatus::Occluded, Some(zero)),
            rec(2, RecordStatus::Visible, Some(zero)),
        ];
        let results = vec![
            rec(0, RecordStatus::DetectedGlobal, Some(shifted)),
            rec(1, RecordStatus::Lost, None),
            rec(2, RecordStatus::Lost, None),
        ];
        let r = evaluate(&results, &truth);
        assert_eq!((r.visible_frames, r.evaluated_frames), (2, 1));
        assert_eq!(r.mean_px, 1.0);
        assert_eq!(r.rms_px, 5.0f64.sqrt());
        assert!((r.mean_rms_fraction - 5.0f64.sqrt() / 50.0).abs() < 1e-15);
    }
}
