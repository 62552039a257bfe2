//! Cross-validated training and evaluation of one model variant per fold.

use std::collections::HashMap;

use crate::analysis::report::{evaluate_prediction, VideoEval};
use crate::data::record::VideoRecord;
use crate::error::{Error, Result};
use crate::models::checkpoint::AnyModel;
use crate::models::{FusionModel, ModelConfig, ModelVariant, Modality, UnimodalModel};
use crate::rng;
use crate::training::{finetune_fusion, predict, train_unimodal, Fold, TrainConfig, TrainHistory};

/// Seed for everything inside fold `k`.
pub fn fold_seed(seed: u64, k: usize) -> u64 {
    rng::derive_seed(seed, &format!("fold{k}"))
}

/// Default optimizer settings for a variant.
pub fn default_train_config(variant: ModelVariant, seed: u64) -> TrainConfig {
    if variant.is_fusion() {
        TrainConfig::fusion(seed)
    } else {
        TrainConfig::unimodal(seed)
    }
}

pub fn select<'a>(videos: &'a [VideoRecord], ids: &[String]) -> Result<Vec<&'a VideoRecord>> {
    let by_id: HashMap<&str, &VideoRecord> = videos.iter().map(|v| (v.id.as_str(), v)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("fold refers to unknown video {id}")))
        })
        .collect()
}

fn owned(videos: &[&VideoRecord]) -> Vec<VideoRecord> {
    videos.iter().map(|v| (*v).clone()).collect()
}

/// Trains `variant` on the fold's training videos. Fusion variants need the
/// fold's trained visual and audio models.
pub fn train_fold(
    variant: ModelVariant,
    config: &ModelConfig,
    fold: &Fold,
    videos: &[VideoRecord],
    train: &TrainConfig,
    pretrained: Option<(&UnimodalModel<f32>, &UnimodalModel<f32>)>,
) -> Result<(AnyModel<f32>, TrainHistory)> {
    let train_videos = owned(&select(videos, &fold.train)?);
    let seed = train.seed;
    match variant {
        ModelVariant::Visual | ModelVariant::Audio => {
            let modality = if variant == ModelVariant::Visual {
                Modality::Visual
            } else {
                Modality::Audio
            };
            let mut m = UnimodalModel::new(modality, config.clone(), seed)?;
            let h = train_unimodal(&mut m, &train_videos, train)?;
            Ok((AnyModel::Unimodal(m), h))
        }
        _ => {
            let (v, a) = pretrained.ok_or_else(|| {
                Error::State(format!("{variant} needs trained visual and audio models for fold {}", fold.index))
            })?;
            let mut m = FusionModel::new(variant, config.clone(), seed)?;
            m.load_pretrained(v, a)?;
            let h = finetune_fusion(&mut m, &train_videos, train)?;
            Ok((AnyModel::Fusion(m), h))
        }
    }
}

/// Predicts and scores every test video of a fold.
pub fn evaluate_fold(model: &AnyModel<f32>, fold: &Fold, videos: &[VideoRecord]) -> Result<Vec<VideoEval>> {
    use crate::models::Summarizer;
    select(videos, &fold.test)?
        .into_iter()
        .map(|v| {
            let p = predict::<f32, _>(model, v)?;
            evaluate_prediction(model.variant(), fold.index, &p, v)
        })
        .collect()
}
