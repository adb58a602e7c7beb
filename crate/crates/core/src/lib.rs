//! Frame-level audio-visual expression recognition toolkit.
//!
//! Everything downstream of the pretrained encoders lives here: the per-frame
//! feature file formats, audio/frame alignment, the mixture-of-experts and
//! gated-fusion classification heads with their hand-written backward passes,
//! the AdamW trainer, temporal smoothing of logits and macro-F1 evaluation,
//! plus the pixel-space crop and padding augmentation used to prepare encoder
//! inputs.
//!
//! Batch-level loops run on rayon when the `parallel` feature is enabled
//! (the default) and fall back to plain iterators otherwise. Results are
//! bit-identical either way.

#![allow(clippy::needless_range_loop)]

pub mod alignment;
pub mod datamodel;
pub mod error;
pub mod experiments;
pub mod fusion;
pub mod head;
pub mod imageops;
pub mod metrics;
pub mod moe_head;
pub mod ndmath;
pub mod par;
pub mod smoothing;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};

/// Number of expression categories.
pub const NUM_CLASSES: usize = 8;
