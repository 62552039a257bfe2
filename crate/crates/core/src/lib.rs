//! Audio-visual video summarization.
//!
//! Unimodal SUM-FCN summarizers over visual and audio features, four
//! GRU/attention late-fusion variants, a class-weighted binary cross-entropy
//! objective, and a canonical-correlation analysis that splits videos into
//! positively and negatively audio-visually correlated subsets for
//! conditioned evaluation.
//!
//! Network code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the two instantiations used in practice.

pub mod analysis;
pub mod cli;
pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Single-precision tensor (training, on-disk payloads).
pub type Tensor32 = nn::Tensor<f32>;
/// Double-precision tensor (gradient checks, statistics).
pub type Tensor64 = nn::Tensor<f64>;
pub type ParamStore32 = nn::ParamStore<f32>;
pub type ParamStore64 = nn::ParamStore<f64>;
pub type UnimodalModel32 = models::UnimodalModel<f32>;
pub type UnimodalModel64 = models::UnimodalModel<f64>;
pub type FusionModel32 = models::FusionModel<f32>;
pub type FusionModel64 = models::FusionModel<f64>;
