//! Music genre classification from log-mel spectrograms.
//!
//! The pipeline is split into small, independently testable modules:
//!
//! * [`dsp`] decodes WAV audio and computes `ln(1 + mel energy)` spectrograms.
//! * [`nn`] is a small dense-tensor engine (convolution, max pooling, dense
//!   layers, softmax/cross-entropy, dropout, momentum SGD) with hand-written
//!   backward passes.
//! * [`model`] wires those layers into the fixed 7-layer [`model::GenreCnn`]
//!   and reads/writes checkpoints.
//! * [`dataset`] handles manifests, stratified splits and 256-frame segments.
//! * [`trainer`] runs early-stopped SGD training and computes accuracy and
//!   confusion matrices.
//! * [`inference`] predicts a whole track by averaging segment probabilities.
//! * [`analysis`] estimates learned filters with Lasso regression and projects
//!   hidden representations with multi-class LDA.

pub mod analysis;
pub mod dataset;
pub mod dsp;
mod error;
pub mod inference;
pub mod model;
pub mod nn;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
