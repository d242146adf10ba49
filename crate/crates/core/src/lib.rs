//! Core library for off-axis iris data synthesis and segmentation.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`imaging`] — pixel grids, resampling, convolution, file I/O.
//! - [`quality`] — contrast, motion-blur and shadow degradation.
//! - [`offaxis`] — spatial stretching and projective tilting.
//! - [`pipeline`] — randomized augmentation plans, dataset building,
//!   manifests and splits.
//! - [`fcn`] — the compact fully convolutional segmentation network:
//!   forward/backward, Adam, training, checkpoints, complexity accounting.
//! - [`eval`] — output thresholding and the six segmentation metrics.
//!
//! Every random decision is materialized into a serializable plan before it
//! is applied, so any output sample can be reproduced bit-identically from
//! its manifest record.

pub mod error;
pub mod eval;
pub mod fcn;
pub mod imaging;
pub mod offaxis;
pub mod pipeline;
pub mod quality;

pub use error::{Error, Result};
pub use imaging::{Image, Kernel, Mask};
