//! Successive robot-error detection from multimodal human-reaction features.
//!
//! The pipeline labels frames by how many errors have occurred, cuts labeled
//! windows, splits them under one of four schemes, fits train-only feature
//! transforms, trains LSTM or GRU encoders under early, intermediate or late
//! fusion, and reports metrics as mean ± SD over per-participant folds.

// `!(x > 0.0)` style checks are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod fusion;
pub mod harness;
pub mod matrix;
pub mod metrics;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod splits;
pub mod synth;

pub use error::{Error, Result};
