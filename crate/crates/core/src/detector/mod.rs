//! Viola-Jones style face detection: integral images, Haar-like features,
//! staged cascade evaluation and the multi-scale sliding-window scan, plus the
//! global/local detection steps of the tracking loop.

mod cascade;
mod integral;
mod scan;

pub use cascade::{
    eval_window, window_feature_values, CascadeModel, HaarFeature, ModelError, Stage, WeakClassifier, WeightedRect,
    WindowVerdict,
};
pub use integral::{integral_image, IntegralImage};
pub use scan::{
    detect_faces, detect_global, detect_global_detailed, group_detections, validate_local, validate_local_detailed, DetectParams, Detection, Detections,
    LocalValidation, LOCAL_SEARCH_EXPANSION, VALIDATION_IOU,
};

use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectError {
    /// A rectangle or window reaches outside the integral image, or has zero area.
    OutOfBounds,
    /// The requested scan region does not overlap the frame.
    RegionOutsideFrame,
    /// Detection windows must be square.
    NonSquareWindow,
    InvalidParams,
}

impl fmt::Display for DetectError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msg = match self {
            DetectError::OutOfBounds => "rectangle outside the integral image",
            DetectError::RegionOutsideFrame => "scan region does not overlap the frame",
            DetectError::NonSquareWindow => "detection windows must be square",
            DetectError::InvalidParams => "invalid detection parameters",
        };
        f.write_str(msg)
    }
}
