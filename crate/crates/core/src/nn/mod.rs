//! Small numerical engine: sparse-dense products, layers with hand-written
//! reverse passes, cosine similarity, Adam and EMA.
//!
//! Everything is generic over [`Real`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference checks.

use std::fmt::{Debug, Display};

mod adam;
mod checkpoint;
mod ema;
mod layers;
mod sparse;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, TensorEntry};
pub use ema::{ema_update, EmaLink};
pub use layers::{
    cosine_similarity, cosine_similarity_backward, degenerate_cosine_count, glorot_uniform, linear_backward, linear_forward,
    prelu_backward, prelu_forward, Parameter, NORM_EPS,
};
pub use sparse::Csr;

pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("representable")
}
