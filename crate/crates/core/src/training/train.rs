//! Training and fine-tuning loops: one Adam step per video, videos visited
//! in a seeded random order each epoch.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::record::VideoRecord;
use crate::error::{Error, Result};
use crate::models::{prepare_input, FusionModel, ModelConfig, ModelInput, ModelVariant, Summarizer, UnimodalModel};
use crate::nn::{Adam, AdamConfig, ParamStore, Tape, Tensor, Var};
use crate::rng;
use crate::scalar::Scalar;
use crate::training::loss::{masked_class_weights, weighted_bce_on_tape};

pub const UNIMODAL_LR: f64 = 1e-3;
pub const FUSION_LR: f64 = 1e-4;
pub const DEFAULT_EPOCHS: usize = 200;
pub const DEFAULT_PATIENCE: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Stop once the epoch-mean training loss has not improved for this many
    /// epochs.
    pub patience: Option<usize>,
}

impl TrainConfig {
    pub fn unimodal(seed: u64) -> Self {
        Self {
            lr: UNIMODAL_LR,
            epochs: DEFAULT_EPOCHS,
            seed,
            patience: Some(DEFAULT_PATIENCE),
        }
    }

    pub fn fusion(seed: u64) -> Self {
        Self {
            lr: FUSION_LR,
            ..Self::unimodal(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::invalid(format!("learning rate must be finite and >= 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.patience == Some(0) {
            return Err(Error::invalid("patience must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub video_id: String,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<LossRecord>,
    /// Mean training loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    /// Optimizer steps taken.
    pub steps: u64,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// Writes `epoch,video_id,loss` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn prepare_all<T: Scalar, M: Summarizer<T>>(model: &M, videos: &[VideoRecord]) -> Result<Vec<ModelInput<T>>> {
    videos.iter().map(|v| prepare_input(v, model.config())).collect()
}

/// Generic loop over prepared inputs.
pub fn fit<T: Scalar, M: Summarizer<T>>(
    model: &mut M,
    inputs: &[ModelInput<T>],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    if inputs.is_empty() {
        return Err(Error::invalid("no training videos"));
    }
    let mut adam = Adam::new(AdamConfig::with_lr(config.lr));
    let mut order_rng = rng::stream(config.seed, "data/order");
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = TrainHistory::default();
    let mut best = f64::INFINITY;
    let mut since_best = 0usize;
    let variant = model.variant();

    for epoch in 0..config.epochs {
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &i in &order {
            let x = &inputs[i];
            let diag = |e: Error| match e {
                Error::Numerical(msg) => {
                    Error::Numerical(format!("{variant}: epoch {epoch}, video {}: {msg}", x.id))
                }
                other => other,
            };
            let mut tape = Tape::new();
            let s = model.scores(&mut tape, x).map_err(diag)?;
            let w = masked_class_weights(&x.labels, &x.mask)?;
            let loss = weighted_bce_on_tape(&mut tape, s, &x.labels, w, &x.mask).map_err(diag)?;
            let value = tape.value(loss).data()[0].as_f64();
            if !value.is_finite() {
                return Err(Error::Numerical(format!(
                    "{variant}: loss is {value} at epoch {epoch}, video {}",
                    x.id
                )));
            }
            let grads = tape.backward(loss)?;
            let store = model.store_mut();
            store.zero_grad();
            grads.accumulate_into(store)?;
            adam.step(store);
            history.steps += 1;
            total += value;
            history.records.push(LossRecord {
                epoch,
                video_id: x.id.clone(),
                loss: value,
            });
        }
        let mean = total / inputs.len() as f64;
        history.epoch_losses.push(mean);
        debug!("{variant} epoch {epoch}: mean loss {mean:.6}");
        if mean < best {
            best = mean;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if config.patience.is_some_and(|p| since_best >= p) {
            info!("{variant}: early stop after epoch {epoch} (best mean loss {best:.6})");
            history.stopped_early = true;
            break;
        }
    }
    Ok(history)
}

pub fn train_unimodal<T: Scalar>(
    model: &mut UnimodalModel<T>,
    videos: &[VideoRecord],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    let inputs = prepare_all(model, videos)?;
    fit(model, &inputs, config)
}

/// Freezes the pretrained parts, then trains the fusion block and the final
/// deconvolution.
pub fn finetune_fusion<T: Scalar>(
    model: &mut FusionModel<T>,
    videos: &[VideoRecord],
    config: &TrainConfig,
) -> Result<TrainHistory> {
    model.freeze_pretrained()?;
    let inputs = prepare_all(model, videos)?;
    let taps = inputs
        .iter()
        .map(|x| Ok((x.id.clone(), model.taps(x)?)))
        .collect::<Result<HashMap<_, _>>>()?;
    fit(&mut CachedTaps { model, taps }, &inputs, config)
}

/// A frozen-upstream fusion model whose unimodal taps are precomputed per
/// video id.
struct CachedTaps<'a, T> {
    model: &'a mut FusionModel<T>,
    taps: HashMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Summarizer<T> for CachedTaps<'_, T> {
    fn variant(&self) -> ModelVariant {
        self.model.variant
    }

    fn config(&self) -> &ModelConfig {
        &self.model.config
    }

    fn store(&self) -> &ParamStore<T> {
        &self.model.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.model.store
    }

    fn scores(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<Var> {
        let (e_v, e_a) = self
            .taps
            .get(&input.id)
            .ok_or_else(|| Error::State(format!("no cached taps for video {}", input.id)))?;
        let e_v = tape.input(e_v.clone())?;
        let e_a = tape.input(e_a.clone())?;
        Ok(self.model.forward_from_taps(tape, e_v, e_a)?.s)
    }
}

/// Class probabilities for the real (unpadded) frames of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    /// `[N, 2]`, column 0 = key-frame probability.
    pub scores: Tensor<f64>,
}

pub fn predict<T: Scalar, M: Summarizer<T> + ?Sized>(model: &M, video: &VideoRecord) -> Result<Prediction> {
    let x = prepare_input::<T>(video, model.config())?;
    let s = model.predict(&x)?;
    let n = x.real_frames();
    Ok(Prediction {
        id: video.id.clone(),
        scores: Tensor::new(vec![n, 2], s.data()[..2 * n].iter().map(|v| v.as_f64()).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synthetic, SynthConfig};
    use crate::models::{ModelConfig, ModelVariant, Modality};

    fn small_set() -> Vec<VideoRecord> {
        let cfg = SynthConfig {
            frames: 32,
            feature_dim: 8,
            audio_window: 4,
            latent_dim: 2,
            ..SynthConfig::balanced(3, 0.9, 1)
        };
        generate_synthetic(&cfg).unwrap()
    }

    #[test]
    fn zero_lr_keeps_parameters_and_loss() {
        let videos = small_set();
        let mut m = UnimodalModel::<f64>::new(Modality::Visual, ModelConfig::new(8, 4), 1).unwrap();
        let before = m.store.clone();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            patience: None,
            ..TrainConfig::unimodal(1)
        };
        let h = train_unimodal(&mut m, &videos[..1], &cfg).unwrap();
        for ((_, a), (_, b)) in m.store.iter().zip(before.iter()) {
            assert_eq!(a.value, b.value);
        }
        assert!(h.epoch_losses.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn one_epoch_one_video_is_one_step() {
        let videos = small_set();
        let mut m = UnimodalModel::<f32>::new(Modality::Audio, ModelConfig::new(8, 4), 1).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..TrainConfig::unimodal(1)
        };
        let h = train_unimodal(&mut m, &videos[..1], &cfg).unwrap();
        assert_eq!(h.steps, 1);
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.records[0].video_id, videos[0].id);
    }

    #[test]
    fn training_is_deterministic() {
        let videos = small_set();
        let run = || {
            let mut m = UnimodalModel::<f32>::new(Modality::Visual, ModelConfig::new(8, 4), 4).unwrap();
            let cfg = TrainConfig {
                epochs: 3,
                ..TrainConfig::unimodal(4)
            };
            train_unimodal(&mut m, &videos, &cfg).unwrap();
            m.store.iter().map(|(_, p)| p.value.clone()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn finetune_requires_pretrained_weights() {
        let videos = small_set();
        let mut f = FusionModel::<f32>::new(ModelVariant::AvGru, ModelConfig::new(8, 4), 1).unwrap();
        assert!(matches!(
            finetune_fusion(&mut f, &videos, &TrainConfig::fusion(1)),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn finetune_leaves_frozen_bytes() {
        let videos = small_set();
        let cfg = ModelConfig::new(8, 4);
        let v = UnimodalModel::<f32>::new(Modality::Visual, cfg.clone(), 1).unwrap();
        let a = UnimodalModel::<f32>::new(Modality::Audio, cfg.clone(), 2).unwrap();
        let mut f = FusionModel::<f32>::new(ModelVariant::AvAtt, cfg, 3).unwrap();
        f.load_pretrained(&v, &a).unwrap();
        let before = f.store.clone();
        let tc = TrainConfig {
            lr: 1e-2,
            epochs: 2,
            ..TrainConfig::fusion(3)
        };
        let h = finetune_fusion(&mut f, &videos, &tc).unwrap();
        assert_eq!(h.steps, 6);
        for ((_, p), (_, q)) in f.store.iter().zip(before.iter()) {
            if p.frozen {
                let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&p.value), bits(&q.value), "{}", p.name);
            }
        }
    }

    #[test]
    fn cached_taps_match_full_forward() {
        let videos = small_set();
        let cfg = ModelConfig::new(8, 4);
        let v = UnimodalModel::<f32>::new(Modality::Visual, cfg.clone(), 1).unwrap();
        let a = UnimodalModel::<f32>::new(Modality::Audio, cfg.clone(), 2).unwrap();
        for variant in [ModelVariant::AvGru, ModelVariant::AvAttSc] {
            let mut cached = FusionModel::<f32>::new(variant, cfg.clone(), 3).unwrap();
            cached.load_pretrained(&v, &a).unwrap();
            let mut full = cached.clone();
            let tc = TrainConfig {
                epochs: 2,
                ..TrainConfig::fusion(3)
            };
            let h1 = finetune_fusion(&mut cached, &videos, &tc).unwrap();
            full.freeze_pretrained().unwrap();
            let inputs = prepare_all(&full, &videos).unwrap();
            let h2 = fit(&mut full, &inputs, &tc).unwrap();
            assert_eq!(h1, h2);
            for ((_, p), (_, q)) in cached.store.iter().zip(full.store.iter()) {
                assert_eq!(p.value, q.value, "{}", p.name);
            }
        }
    }

    #[test]
    fn predictions_drop_padding() {
        let mut videos = small_set();
        let v = &mut videos[0];
        v.labels.truncate(30);
        v.importance.truncate(30);
        v.visual = Tensor::new(vec![30, 8], v.visual.data()[..240].to_vec()).unwrap();
        v.audio = Tensor::new(vec![30, 4, 8], v.audio.data()[..960].to_vec()).unwrap();
        let m = UnimodalModel::<f32>::new(Modality::Visual, ModelConfig::new(8, 4), 1).unwrap();
        let p = predict(&m, v).unwrap();
        assert_eq!(p.scores.shape(), &[30, 2]);
    }

    #[test]
    fn invalid_configs() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::unimodal(0)
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: -1.0,
            ..TrainConfig::unimodal(0)
        };
        assert!(bad.validate().is_err());
    }
}
