//! Dense matrices, differentiable layers with closed-form backward passes,
//! the soft-target cross-entropy loss, and a seeded RNG.
//!
//! Working precision is `f64`. Files store `f32` and are promoted on read.

mod layers;
mod loss;
mod matrix;
pub mod ntc1;
pub(crate) mod params;
mod rng;

pub use layers::{
    dropout, dropout_backward, gelu, gelu_backward, sigmoid, sigmoid_scalar, softmax,
    softmax_backward_rows, softmax_rows, LayerNorm, Linear, LnCache, DEFAULT_DROPOUT,
    DEFAULT_LN_EPS,
};
pub use loss::{cross_entropy_reference, weighted_soft_ce};
pub use matrix::Matrix;
pub use params::{NamedTensor, ParamSet, TensorRef, TensorStore};
pub use rng::Rng;
