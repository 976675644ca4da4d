//! Files, clocks, threads and the command line around `dtd-core`.
//!
//! Frames come from directories of PGM/PNG files, models from JSON and a
//! binary weights format, and results go to line-delimited JSON. The `dtd`
//! binary drives the tracker, the frame-by-frame baseline, the synthetic
//! video generator, evaluation and toy training.

pub mod annotate;
pub mod cli;
pub mod clock;
pub mod error;
pub mod eval;
pub mod imageio;
pub mod models;
pub mod records;
pub mod train;

pub use error::DtdError;
