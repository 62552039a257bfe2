//! Late fusion of pretrained visual and audio SUM-FCNs.
//!
//! The visual and audio networks run up to their embedding taps (`e` for
//! AV_GRU / AV_ATT, `e^s` for the `_SC` variants). A fusion block combines
//! the two embeddings and the visual model's final deconvolution decodes the
//! result:
//!
//! * GRU: `[e_v | e_a]` (2C) → GRU (hidden C) → dense C → C
//! * attention: multi-head attention with query `e_v`, key and value `e_a`
//!
//! With `residual` enabled the tapped visual embedding is added to the
//! fusion output, so a zero-initialized block reproduces the visual model.

use crate::error::{Error, Result};
use crate::models::fcnrd::FcnRd;
use crate::models::sumfcn::{decode, SumFcn, UnimodalModel};
use crate::models::{ModelConfig, ModelInput, ModelVariant, Modality, Summarizer};
use crate::nn::layers::{Deconv1d, Dense, Gru, MultiHeadAttention};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::rng;
use crate::scalar::Scalar;

pub const FUSION_PREFIX: &str = "fusion";
/// Parameters fine-tuned besides the fusion block.
pub const HEAD_PREFIX: &str = "sumfcn_v/deconv2";

#[derive(Debug, Clone)]
pub enum FusionBlock {
    Gru { gru: Gru, proj: Dense },
    Attention(MultiHeadAttention),
}

#[derive(Debug, Clone)]
pub struct FusionModel<T> {
    pub variant: ModelVariant,
    pub config: ModelConfig,
    pub seed: u64,
    pub store: ParamStore<T>,
    pub visual: SumFcn,
    pub audio: SumFcn,
    pub fcnrd: FcnRd,
    pub block: FusionBlock,
    pub head: Deconv1d,
    pretrained: bool,
}

#[derive(Debug, Clone)]
pub struct FusionOutput {
    pub e_v: Var,
    pub e_a: Var,
    /// Fusion block output (after the residual, if enabled), `[N/2, C]`.
    pub fused: Var,
    pub logits: Var,
    pub s: Var,
    /// Per-head attention matrices; empty for GRU variants.
    pub attention: Vec<Var>,
}

/// Whether a parameter stays trainable during fine-tuning.
pub fn is_fine_tuned(name: &str) -> bool {
    name.starts_with(&format!("{FUSION_PREFIX}/")) || name.starts_with(&format!("{HEAD_PREFIX}/"))
}

impl<T: Scalar> FusionModel<T> {
    /// Fresh model with randomly initialized unimodal parts; call
    /// [`FusionModel::load_pretrained`] before fine-tuning.
    pub fn new(variant: ModelVariant, config: ModelConfig, seed: u64) -> Result<Self> {
        if !variant.is_fusion() {
            return Err(Error::invalid(format!("{variant} is not a fusion variant")));
        }
        config.validate()?;
        let (d, c) = (config.feature_dim, config.channels);
        let mut store = ParamStore::new();

        let mut r = rng::stream(seed, "init/sumfcn_v");
        let visual = SumFcn::register(&mut store, Modality::Visual.prefix(), d, c, &mut r)?;
        let head = SumFcn::register_head(&mut store, Modality::Visual.prefix(), c, &mut r)?;
        let fcnrd = FcnRd::register(&mut store, &config, &mut rng::stream(seed, "init/fcnrd"))?;
        let mut r = rng::stream(seed, "init/sumfcn_a");
        let audio = SumFcn::register(&mut store, Modality::Audio.prefix(), d, c, &mut r)?;

        let mut r = rng::stream(seed, "init/fusion");
        let block = if variant.uses_attention() {
            FusionBlock::Attention(MultiHeadAttention::register(
                &mut store,
                &format!("{FUSION_PREFIX}/attention"),
                c,
                config.attention_heads,
                &mut r,
            )?)
        } else {
            FusionBlock::Gru {
                gru: Gru::register(&mut store, &format!("{FUSION_PREFIX}/gru"), 2 * c, c, &mut r)?,
                proj: Dense::register(&mut store, &format!("{FUSION_PREFIX}/proj"), c, c, &mut r)?,
            }
        };
        Ok(Self {
            variant,
            config,
            seed,
            store,
            visual,
            audio,
            fcnrd,
            block,
            head,
            pretrained: false,
        })
    }

    /// Rebinds layer handles to a complete store (checkpoint loading).
    pub fn from_store(
        variant: ModelVariant,
        config: ModelConfig,
        seed: u64,
        store: ParamStore<T>,
        pretrained: bool,
    ) -> Result<Self> {
        if !variant.is_fusion() {
            return Err(Error::invalid(format!("{variant} is not a fusion variant")));
        }
        let block = if variant.uses_attention() {
            FusionBlock::Attention(MultiHeadAttention::bind(
                &store,
                &format!("{FUSION_PREFIX}/attention"),
                config.attention_heads,
            )?)
        } else {
            FusionBlock::Gru {
                gru: Gru::bind(&store, &format!("{FUSION_PREFIX}/gru"))?,
                proj: Dense::bind(&store, &format!("{FUSION_PREFIX}/proj"))?,
            }
        };
        Ok(Self {
            variant,
            visual: SumFcn::bind(&store, Modality::Visual.prefix())?,
            audio: SumFcn::bind(&store, Modality::Audio.prefix())?,
            fcnrd: FcnRd::bind(&store, &config)?,
            head: SumFcn::bind_head(&store, Modality::Visual.prefix())?,
            block,
            config,
            seed,
            store,
            pretrained,
        })
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained
    }

    /// Copies every unimodal parameter from trained visual and audio models.
    pub fn load_pretrained(&mut self, visual: &UnimodalModel<T>, audio: &UnimodalModel<T>) -> Result<()> {
        if visual.modality != Modality::Visual || audio.modality != Modality::Audio {
            return Err(Error::invalid("load_pretrained needs a visual and an audio model"));
        }
        for m in [visual, audio] {
            let (a, b) = (&m.config, &self.config);
            if (a.feature_dim, a.audio_window, a.channels, a.fcnrd_channels)
                != (b.feature_dim, b.audio_window, b.channels, b.fcnrd_channels)
            {
                return Err(Error::invalid(format!(
                    "pretrained {:?} model config {a:?} does not match fusion config {b:?}",
                    m.modality
                )));
            }
        }
        let names: Vec<String> = self.store.names();
        for name in names.iter().filter(|n| !n.starts_with(&format!("{FUSION_PREFIX}/"))) {
            let source = if name.starts_with(Modality::Visual.prefix()) {
                &visual.store
            } else {
                &audio.store
            };
            let p = source
                .by_name(name)
                .ok_or_else(|| Error::invalid(format!("pretrained model lacks parameter {name}")))?;
            let id = self.store.id(name)?;
            self.store.set_value(id, p.value.clone())?;
        }
        self.pretrained = true;
        Ok(())
    }

    /// Freezes everything except the fusion block and the final
    /// deconvolution.
    pub fn freeze_pretrained(&mut self) -> Result<()> {
        if !self.pretrained {
            return Err(Error::State(
                "freeze_pretrained called before pretrained unimodal weights were loaded".into(),
            ));
        }
        self.store.set_frozen_where(|n| !is_fine_tuned(n));
        Ok(())
    }

    /// Values of the tapped unimodal embeddings `(e_v, e_a)` for one input.
    /// They depend only on frozen parameters once
    /// [`freeze_pretrained`](Self::freeze_pretrained) has run, so they can be
    /// computed once per video and replayed with
    /// [`forward_from_taps`](Self::forward_from_taps).
    pub fn taps(&self, input: &ModelInput<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let mut tape = Tape::new();
        let (e_v, e_a) = self.embed(&mut tape, input)?;
        Ok((tape.value(e_v).clone(), tape.value(e_a).clone()))
    }

    fn embed(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<(Var, Var)> {
        let store = &self.store;
        let skip = self.variant.uses_skip_tap();
        let f_v = tape.input(input.visual.clone())?;
        let e_v = self.visual.embed(tape, store, f_v)?.select(skip);
        let f_w = tape.input(input.audio.clone())?;
        let f_a = self.fcnrd.forward(tape, store, f_w)?;
        let e_a = self.audio.embed(tape, store, f_a)?.select(skip);
        Ok((e_v, e_a))
    }

    pub fn forward(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<FusionOutput> {
        let (e_v, e_a) = self.embed(tape, input)?;
        self.forward_from_taps(tape, e_v, e_a)
    }

    /// Fusion block and head on given tap nodes.
    pub fn forward_from_taps(&self, tape: &mut Tape<T>, e_v: Var, e_a: Var) -> Result<FusionOutput> {
        let store = &self.store;
        let mut attention = Vec::new();
        let mut fused = match &self.block {
            FusionBlock::Gru { gru, proj } => {
                let x = tape.concat_cols(&[e_v, e_a])?;
                let h0 = tape.input(Tensor::zeros(&[1, gru.hidden]))?;
                let h = gru.forward(tape, store, x, h0)?;
                proj.forward(tape, store, h)?
            }
            FusionBlock::Attention(mha) => {
                let out = mha.forward(tape, store, e_v, e_a, e_a)?;
                attention = out.weights;
                out.output
            }
        };
        if self.config.residual {
            fused = tape.add(fused, e_v)?;
        }
        let (logits, s) = decode(tape, store, &self.head, fused)?;
        Ok(FusionOutput {
            e_v,
            e_a,
            fused,
            logits,
            s,
            attention,
        })
    }
}

impl<T: Scalar> Summarizer<T> for FusionModel<T> {
    fn variant(&self) -> ModelVariant {
        self.variant
    }

    fn config(&self) -> &ModelConfig {
        &self.config
    }

    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn scores(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<Var> {
        Ok(self.forward(tape, input)?.s)
    }
}
