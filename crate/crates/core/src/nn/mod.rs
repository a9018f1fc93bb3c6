//! A small deterministic reverse-mode network kernel.
//!
//! Only the pieces the encoder and heads need: channels-last 1-D convolution,
//! dense layers, ReLU, max pooling, flatten, softmax, two cross-entropy losses
//! and Adam. Reductions run sequentially so results are bit-reproducible.

mod gemm;
pub mod io;
mod layers;
pub mod loss;
mod optim;
mod params;
mod tensor;

pub(crate) use gemm::gemm;
pub use layers::{Network, Padding, LayerSpec, Tape};
pub use optim::{Adam, AdamConfig};
pub use params::ParamStore;
pub use tensor::{Float, Tensor};
