//! Label space, per-frame feature records, class weights, fold splits and the
//! `AFF1` per-frame feature file.

pub mod aff1;
mod folds;
mod label;
pub mod manifest;
mod record;
mod weights;

pub use folds::{make_folds, FoldSplit};
pub use label::{Expression, MISSING_CODE};
pub use manifest::ManifestEntry;
pub use record::{FrameRecord, VideoSequence, SCALES};
pub use weights::{compute_class_weights, ClassWeights};
