//! Line-delimited JSON result and ground-truth files.
//!
//! A results file holds one `FrameRecord` object per line in frame order,
//! then a single summary line `{"summary": {...}}` carrying per-stage
//! mean/median/p95 milliseconds, the frame count and the status counts.
//! Ground-truth files use the same record with status `Visible` or
//! `Occluded` and no `points_kept`/`timings` fields, and have no summary.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use dtd_core::pipeline::{FrameResult, FrameStatus, StageTimings, TimingSummary};
use dtd_core::synth::FrameTruth;
use dtd_core::{BoundingBox, LandmarkSet, Point2};
use serde::{Deserialize, Serialize};

use crate::error::DtdError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecordStatus {
    DetectedGlobal,
    TrackedValidated,
    RecoveredGlobal,
    Lost,
    /// Ground truth: the face is in view.
    Visible,
    /// Ground truth: the face is covered; position is still given.
    Occluded,
}

impl From<FrameStatus> for RecordStatus {
    fn from(s: FrameStatus) -> Self {
        match s {
            FrameStatus::DetectedGlobal => RecordStatus::DetectedGlobal,
            FrameStatus::TrackedValidated => RecordStatus::TrackedValidated,
            FrameStatus::RecoveredGlobal => RecordStatus::RecoveredGlobal,
            FrameStatus::Lost => RecordStatus::Lost,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl From<BoundingBox> for BoxRecord {
    fn from(b: BoundingBox) -> Self {
        Self { x: b.x, y: b.y, w: b.w, h: b.h }
    }
}

impl From<BoxRecord> for BoundingBox {
    fn from(b: BoxRecord) -> Self {
        BoundingBox { x: b.x, y: b.y, w: b.w, h: b.h }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame_index: usize,
    pub status: RecordStatus,
    #[serde(rename = "box")]
    pub bbox: Option<BoxRecord>,
    /// Left eye, right eye, nose, left mouth corner, right mouth corner.
    pub landmarks: Option<[[f64; 2]; 5]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points_kept: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

fn landmark_array(lm: &LandmarkSet) -> [[f64; 2]; 5] {
    lm.points.map(|p| [p.x, p.y])
}

impl FrameRecord {
    pub fn from_result(r: &FrameResult) -> Self {
        Self {
            frame_index: r.frame_index,
            status: r.status.into(),
            bbox: r.bbox.map(Into::into),
            landmarks: r.landmarks.as_ref().map(landmark_array),
            points_kept: Some(r.points_kept),
            timings: Some(r.timings),
        }
    }

    pub fn from_truth(t: &FrameTruth) -> Self {
        Self {
            frame_index: t.frame_index,
            status: if t.visible { RecordStatus::Visible } else { RecordStatus::Occluded },
            bbox: Some(t.bbox.into()),
            landmarks: Some(landmark_array(&t.landmarks)),
            points_kept: None,
            timings: None,
        }
    }

    pub fn landmark_set(&self) -> Option<LandmarkSet> {
        self.landmarks.map(|a| LandmarkSet::new(a.map(|[x, y]| Point2::new(x, y))))
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        self.bbox.map(Into::into)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SummaryLine {
    summary: TimingSummary,
}

/// A parsed results or ground-truth file.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordFile {
    pub records: Vec<FrameRecord>,
    pub summary: Option<TimingSummary>,
}

/// Write records and, if given, the trailing summary line.
pub fn write_records<W: Write>(
    mut out: W,
    records: &[FrameRecord],
    summary: Option<&TimingSummary>,
) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    if let Some(s) = summary {
        serde_json::to_writer(&mut out, &SummaryLine { summary: *s })?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// One record per result plus the summary line.
pub fn write_results(path: &Path, results: &[FrameResult]) -> Result<(), DtdError> {
    let records: Vec<FrameRecord> = results.iter().map(FrameRecord::from_result).collect();
    let summary = TimingSummary::of(results);
    let f = fs::File::create(path).map_err(|e| DtdError::io(path, e))?;
    write_records(BufWriter::new(f), &records, Some(&summary)).map_err(|e| DtdError::io(path, e))
}

pub fn write_ground_truth(path: &Path, truth: &[FrameTruth]) -> Result<(), DtdError> {
    let records: Vec<FrameRecord> = truth.iter().map(FrameRecord::from_truth).collect();
    let f = fs::File::create(path).map_err(|e| DtdError::io(path, e))?;
    write_records(BufWriter::new(f), &records, None).map_err(|e| DtdError::io(path, e))
}

/// Parse a results or ground-truth file. Blank lines are skipped; a summary
/// line, if present, must be the last non-blank line.
pub fn read_records(path: &Path) -> Result<RecordFile, DtdError> {
    let f = fs::File::open(path).map_err(|e| DtdError::io(path, e))?;
    parse_records(BufReader::new(f), path)
}

pub fn parse_records<R: BufRead>(input: R, path: &Path) -> Result<RecordFile, DtdError> {
    let mut file = RecordFile::default();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| DtdError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| DtdError::BadRecord { path: path.to_path_buf(), line: i + 1, reason };
        if file.summary.is_some() {
            return Err(bad("record after the summary line".into()));
        }
        if let Ok(s) = serde_json::from_str::<SummaryLine>(&line) {
            file.summary = Some(s.summary);
            continue;
        }
        let rec: FrameRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        file.records.push(rec);
    }
    Ok(file)
}
