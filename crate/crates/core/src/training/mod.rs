//! Objective, cross-validation folds and optimization loops.

pub mod folds;
pub mod loss;
pub mod train;

pub use folds::{make_folds, Fold, FoldPlan, FoldScheme};
pub use loss::{class_weights, weighted_bce, ClassWeights};
pub use train::{finetune_fusion, predict, train_unimodal, Prediction, TrainConfig, TrainHistory};
