use alloc::vec::Vec;
use core::fmt;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use super::integral::IntegralImage;
use super::DetectError;
use crate::geometry::BoundingBox;
use crate::math;

/// Rectangle in base-window pixels with a signed weight.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeightedRect {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub weight: f64,
}

impl WeightedRect {
    pub fn area(&self) -> f64 {
        f64::from(self.w) * f64::from(self.h)
    }
}

/// Two or three weighted rectangles whose weighted areas cancel, so a
/// constant window scores zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct HaarFeature {
    pub rects: Vec<WeightedRect>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WeakClassifier {
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub feature: HaarFeature,
    /// Normalized feature values below `split` vote `left`, others `right`.
    pub split: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Stage {
    /// A window passes the stage when its vote sum is at least this.
    pub threshold: f64,
    pub weak: Vec<WeakClassifier>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct CascadeModel {
    pub base_window: u32,
    pub stages: Vec<Stage>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    NoStages,
    EmptyStage { stage: usize },
    BadRectCount { stage: usize, weak: usize, count: usize },
    RectOutsideWindow { stage: usize, weak: usize },
    NonZeroWeightSum { stage: usize, weak: usize, sum: f64 },
    ZeroBaseWindow,
    NonFinite { stage: usize },
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::NoStages => write!(f, "cascade has no stages"),
            ModelError::EmptyStage { stage } => write!(f, "stage {stage} has no weak classifiers"),
            ModelError::BadRectCount { stage, weak, count } => {
                write!(f, "stage {stage} weak {weak}: {count} rectangles, expected 2 or 3")
            }
            ModelError::RectOutsideWindow { stage, weak } => {
                write!(f, "stage {stage} weak {weak}: rectangle outside the base window")
            }
            ModelError::NonZeroWeightSum { stage, weak, sum } => {
                write!(f, "stage {stage} weak {weak}: weighted areas sum to {sum}, expected 0")
            }
            ModelError::ZeroBaseWindow => write!(f, "base window must be positive"),
            ModelError::NonFinite { stage } => write!(f, "stage {stage} contains non-finite values"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowVerdict {
    Pass,
    RejectAtStage(usize),
}

impl WindowVerdict {
    pub fn passed(self) -> bool {
        self == WindowVerdict::Pass
    }
}

impl HaarFeature {
    pub fn weighted_area_sum(&self) -> f64 {
        self.rects.iter().map(|r| r.weight * r.area()).sum()
    }
}

impl CascadeModel {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.base_window == 0 {
            return Err(ModelError::ZeroBaseWindow);
        }
        if self.stages.is_empty() {
            return Err(ModelError::NoStages);
        }
        for (si, stage) in self.stages.iter().enumerate() {
            if stage.weak.is_empty() {
                return Err(ModelError::EmptyStage { stage: si });
            }
            if !stage.threshold.is_finite() {
                return Err(ModelError::NonFinite { stage: si });
            }
            for (wi, weak) in stage.weak.iter().enumerate() {
                let rects = &weak.feature.rects;
                if !(2..=3).contains(&rects.len()) {
                    return Err(ModelError::BadRectCount { stage: si, weak: wi, count: rects.len() });
                }
                if ![weak.split, weak.left, weak.right].iter().all(|v| v.is_finite())
                    || rects.iter().any(|r| !r.weight.is_finite())
                {
                    return Err(ModelError::NonFinite { stage: si });
                }
                for r in rects {
                    if r.w == 0 || r.h == 0 || r.x + r.w > self.base_window || r.y + r.h > self.base_window {
                        return Err(ModelError::RectOutsideWindow { stage: si, weak: wi });
                    }
                }
                let sum = weak.feature.weighted_area_sum();
                let scale: f64 = rects.iter().map(|r| (r.weight * r.area()).abs()).sum();
                if sum.abs() > 1e-9 * scale.max(1.0) {
                    return Err(ModelError::NonZeroWeightSum { stage: si, weak: wi, sum });
                }
            }
        }
        Ok(())
    }

    /// Rect geometry resolved for one window size.
    pub(crate) fn scaled(&self, size: usize) -> ScaledCascade {
        let s = size as f64 / f64::from(self.base_window);
        let stages = self
            .stages
            .iter()
            .map(|st| ScaledStage {
                threshold: st.threshold,
                weak: st
                    .weak
                    .iter()
                    .map(|wc| ScaledWeak {
                        rects: wc.feature.rects.iter().map(|r| ScaledRect::new(r, s, size)).collect(),
                        split: wc.split,
                        left: wc.left,
                        right: wc.right,
                    })
                    .collect(),
            })
            .collect();
        ScaledCascade { size, stages }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ScaledRect {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    /// weight * base area / scaled area: turns a scaled-rect sum into the
    /// base-window weighted contribution, which keeps features zero-sum.
    coeff: f64,
}

impl ScaledRect {
    fn new(r: &WeightedRect, s: f64, size: usize) -> Self {
        let x = (math::round(f64::from(r.x) * s) as usize).min(size - 1);
        let y = (math::round(f64::from(r.y) * s) as usize).min(size - 1);
        let x1 = (math::round(f64::from(r.x + r.w) * s) as usize).clamp(x + 1, size);
        let y1 = (math::round(f64::from(r.y + r.h) * s) as usize).clamp(y + 1, size);
        let (w, h) = (x1 - x, y1 - y);
        Self { x, y, w, h, coeff: r.weight * r.area() / (w * h) as f64 }
    }
}

#[derive(Debug, Clone)]
struct ScaledWeak {
    rects: Vec<ScaledRect>,
    split: f64,
    left: f64,
    right: f64,
}

#[derive(Debug, Clone)]
struct ScaledStage {
    threshold: f64,
    weak: Vec<ScaledWeak>,
}

#[derive(Debug, Clone)]
pub(crate) struct ScaledCascade {
    size: usize,
    stages: Vec<ScaledStage>,
}

/// Windows whose standard deviation falls below this are treated as flat:
/// every feature scores exactly zero.
const FLAT_STD: f64 = 1e-6;

impl ScaledCascade {
    pub(crate) fn size(&self) -> usize {
        self.size
    }

    /// Caller guarantees the window lies inside `ii`.
    pub(crate) fn eval(&self, ii: &IntegralImage, x: usize, y: usize) -> WindowVerdict {
        let std = ii.window_std(x, y, self.size);
        let inv_std = if std < FLAT_STD { 0.0 } else { 1.0 / std };
        for (k, stage) in self.stages.iter().enumerate() {
            let mut votes = 0.0;
            for wc in &stage.weak {
                let raw: f64 = wc
                    .rects
                    .iter()
                    .map(|r| r.coeff * ii.rect_sum_unchecked(x + r.x, y + r.y, r.w, r.h))
                    .sum();
                let value = raw * inv_std;
                votes += if value < wc.split { wc.left } else { wc.right };
            }
            if votes < stage.threshold {
                return WindowVerdict::RejectAtStage(k);
            }
        }
        WindowVerdict::Pass
    }

    /// Variance-normalized value of every feature, stage by stage.
    pub(crate) fn feature_values(&self, ii: &IntegralImage, x: usize, y: usize) -> Vec<Vec<f64>> {
        let std = ii.window_std(x, y, self.size);
        let inv_std = if std < FLAT_STD { 0.0 } else { 1.0 / std };
        self.stages
            .iter()
            .map(|st| {
                st.weak
                    .iter()
                    .map(|wc| {
                        let raw: f64 = wc
                            .rects
                            .iter()
                            .map(|r| r.coeff * ii.rect_sum_unchecked(x + r.x, y + r.y, r.w, r.h))
                            .sum();
                        raw * inv_std
                    })
                    .collect()
            })
            .collect()
    }
}

fn integer_window(ii: &IntegralImage, window: &BoundingBox) -> Result<(usize, usize, usize), DetectError> {
    if window.w != window.h {
        return Err(DetectError::NonSquareWindow);
    }
    if !window.is_valid() || window.x < 0.0 || window.y < 0.0 {
        return Err(DetectError::OutOfBounds);
    }
    let x = math::round(window.x) as usize;
    let y = math::round(window.y) as usize;
    let size = math::round(window.w) as usize;
    if size == 0 || x + size > ii.width() || y + size > ii.height() {
        return Err(DetectError::OutOfBounds);
    }
    Ok((x, y, size))
}

/// Run the cascade on one square window (rounded to whole pixels).
pub fn eval_window(ii: &IntegralImage, model: &CascadeModel, window: &BoundingBox) -> Result<WindowVerdict, DetectError> {
    let (x, y, size) = integer_window(ii, window)?;
    Ok(model.scaled(size).eval(ii, x, y))
}

/// Normalized feature values for a window, grouped by stage.
pub fn window_feature_values(
    ii: &IntegralImage,
    model: &CascadeModel,
    window: &BoundingBox,
) -> Result<Vec<Vec<f64>>, DetectError> {
    let (x, y, size) = integer_window(ii, window)?;
    Ok(model.scaled(size).feature_values(ii, x, y))
}
