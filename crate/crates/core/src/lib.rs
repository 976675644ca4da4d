//! Detection-tracking-detection pipeline for five-point facial landmarks in video.
//!
//! The crate is `no_std` and only needs an allocator. It contains the whole
//! algorithmic path: grayscale rasters and box geometry, pyramidal
//! Lucas-Kanade with forward-backward filtering, the median-flow box
//! estimator, a Haar-cascade face detector, the three-level landmark CNN
//! (inference and training), the per-frame state machine, and a synthetic
//! face-video generator with analytic ground truth.
//!
//! Anything that touches files, clocks or threads lives in the `dtd` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod box_estimator;
pub mod detector;
pub mod flow;
pub mod geometry;
pub mod image;
pub(crate) mod math;
pub mod net;
pub mod pipeline;
pub mod synth;

pub use geometry::{BoundingBox, Landmark, LandmarkSet, Point2};
pub use image::GrayImage;
