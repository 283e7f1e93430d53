//! Tensors with tape-based reverse-mode differentiation, and the layer
//! set the autoencoder needs.

mod adam;
mod conv;
mod gemm;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use conv::{half_pad, ConvGeometry};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{DType, Real, Tensor};
