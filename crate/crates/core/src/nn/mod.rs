//! Deterministic differentiable numeric kernel: tensors, the layers used by
//! the summarization networks, reverse-mode gradients and Adam.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod ops;
pub mod params;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
