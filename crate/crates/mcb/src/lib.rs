//! Compact bilinear pooling for multimodal fusion.
//!
//! The core operator projects each input vector with a signed count sketch,
//! multiplies the sketch spectra element-wise in FFT space, and inverts the
//! transform. This approximates the flattened outer product of the inputs in
//! `d` dimensions instead of `n1 * n2`, with zero learned parameters.
//!
//! The crate also ships the differentiable layers needed to train models on
//! top of the pooled feature (signed square root, L2 normalization, linear
//! layers, softmax cross-entropy, Adam), a soft attention head that applies
//! the pooling per spatial grid location, synthetic planted-bilinear tasks,
//! and a training/ablation harness with a CLI front-end.

pub mod attention;
pub mod cli;
pub mod error;
pub mod fft;
pub mod harness;
pub mod mcb;
pub mod nn;
pub mod rng;
pub mod sketch;
pub mod tasks;
pub mod util;

pub use error::{Error, Result};
pub use mcb::McbOperator;
pub use sketch::CountSketchParams;
