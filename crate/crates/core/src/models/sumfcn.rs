//! SUM-FCN encoder-decoder summarizer and the unimodal models built on it.
//!
//! ```text
//! f [N, D] ─ conv k3 → relu → pool2 ─ enc1 [N/2, C]
//!          ─ conv k3 → relu → pool2 ─ [N/4, C]
//!          ─ conv k3 → relu (bottleneck)
//!          ─ deconv1 ×2 → relu ─ e [N/2, C]
//!          e + enc1 ─ e_s [N/2, C]
//!          ─ deconv2 ×2 ─ logits [N, 2] → softmax ─ s
//! ```

use crate::error::{Error, Result};
use crate::models::fcnrd::FcnRd;
use crate::models::{ModelConfig, ModelInput, ModelVariant, Modality, Summarizer, DOWNSAMPLE};
use crate::nn::layers::{Conv1d, Deconv1d};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::rng::{self, Rng};
use crate::scalar::Scalar;

/// Encoder, bottleneck, first deconvolution and skip of a SUM-FCN, i.e.
/// everything upstream of the embedding taps. The final deconvolution is a
/// separate [`Deconv1d`] so fusion models can own it.
#[derive(Debug, Clone)]
pub struct SumFcn {
    pub enc1: Conv1d,
    pub enc2: Conv1d,
    pub bottleneck: Conv1d,
    pub deconv1: Deconv1d,
}

/// Named intermediate values of one SUM-FCN pass.
#[derive(Debug, Clone, Copy)]
pub struct SumFcnOutput {
    /// Encoder block-1 activations (skip source), `[N/2, C]`.
    pub enc1: Var,
    /// Pre-skip embedding, `[N/2, C]`.
    pub e: Var,
    /// Post-skip embedding, `[N/2, C]`.
    pub e_s: Var,
    /// `[N, 2]` pre-softmax scores.
    pub logits: Var,
    /// `[N, 2]` class probabilities.
    pub s: Var,
}

/// Taps only; see [`SumFcn::embed`].
#[derive(Debug, Clone, Copy)]
pub struct Taps {
    pub enc1: Var,
    pub e: Var,
    pub e_s: Var,
}

impl Taps {
    pub fn select(&self, skip: bool) -> Var {
        if skip {
            self.e_s
        } else {
            self.e
        }
    }
}

impl SumFcn {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input_dim: usize,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let c = channels;
        Ok(Self {
            enc1: Conv1d::register(store, &format!("{prefix}/enc1"), input_dim, c, 3, 1, 1, rng)?,
            enc2: Conv1d::register(store, &format!("{prefix}/enc2"), c, c, 3, 1, 1, rng)?,
            bottleneck: Conv1d::register(store, &format!("{prefix}/bottleneck"), c, c, 3, 1, 1, rng)?,
            deconv1: Deconv1d::register(store, &format!("{prefix}/deconv1"), c, c, 4, 2, rng)?,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        Ok(Self {
            enc1: Conv1d::bind(store, &format!("{prefix}/enc1"), 1, 1)?,
            enc2: Conv1d::bind(store, &format!("{prefix}/enc2"), 1, 1)?,
            bottleneck: Conv1d::bind(store, &format!("{prefix}/bottleneck"), 1, 1)?,
            deconv1: Deconv1d::bind(store, &format!("{prefix}/deconv1"), 2)?,
        })
    }

    /// Final `C → 2` deconvolution.
    pub fn register_head<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        rng: &mut Rng,
    ) -> Result<Deconv1d> {
        Deconv1d::register(store, &format!("{prefix}/deconv2"), channels, 2, 4, 2, rng)
    }

    pub fn bind_head<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Deconv1d> {
        Deconv1d::bind(store, &format!("{prefix}/deconv2"), 2)
    }

    /// Runs the network up to the taps. `f: [N, D]` with `N` divisible by 4.
    pub fn embed<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, f: Var) -> Result<Taps> {
        let (n, _) = tape.value(f).dims2()?;
        if n % DOWNSAMPLE != 0 {
            return Err(Error::invalid(format!(
                "sumfcn: {n} frames is not divisible by {DOWNSAMPLE}; pad the video with pad_to_multiple first"
            )));
        }
        let x = self.enc1.forward(tape, store, f)?;
        let x = tape.relu(x)?;
        let enc1 = tape.maxpool1d(x, 2, 2)?;
        let x = self.enc2.forward(tape, store, enc1)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool1d(x, 2, 2)?;
        let x = self.bottleneck.forward(tape, store, x)?;
        let x = tape.relu(x)?;
        let x = self.deconv1.forward(tape, store, x)?;
        let e = tape.relu(x)?;
        let e_s = tape.add(e, enc1)?;
        Ok(Taps { enc1, e, e_s })
    }
}

/// Applies a `C → 2` head and softmax; returns `(logits, s)`.
pub fn decode<T: Scalar>(tape: &mut Tape<T>, store: &ParamStore<T>, head: &Deconv1d, x: Var) -> Result<(Var, Var)> {
    let logits = head.forward(tape, store, x)?;
    let s = tape.softmax(logits)?;
    Ok((logits, s))
}

/// Visual (`f_v → s_v`) or audio (`f_w → FCN-RD → f_a → s_a`) summarizer.
#[derive(Debug, Clone)]
pub struct UnimodalModel<T> {
    pub modality: Modality,
    pub config: ModelConfig,
    pub seed: u64,
    pub store: ParamStore<T>,
    pub fcnrd: Option<FcnRd>,
    pub net: SumFcn,
    pub head: Deconv1d,
}

impl<T: Scalar> UnimodalModel<T> {
    pub fn new(modality: Modality, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let fcnrd = match modality {
            Modality::Audio => Some(FcnRd::register(&mut store, &config, &mut rng::stream(seed, "init/fcnrd"))?),
            Modality::Visual => None,
        };
        let prefix = modality.prefix();
        let mut r = rng::stream(seed, &format!("init/{prefix}"));
        let net = SumFcn::register(&mut store, prefix, config.feature_dim, config.channels, &mut r)?;
        let head = SumFcn::register_head(&mut store, prefix, config.channels, &mut r)?;
        Ok(Self {
            modality,
            config,
            seed,
            store,
            fcnrd,
            net,
            head,
        })
    }

    /// Rebinds layer handles after the store was replaced wholesale.
    pub fn from_store(modality: Modality, config: ModelConfig, seed: u64, store: ParamStore<T>) -> Result<Self> {
        let prefix = modality.prefix();
        let fcnrd = match modality {
            Modality::Audio => Some(FcnRd::bind(&store, &config)?),
            Modality::Visual => None,
        };
        let net = SumFcn::bind(&store, prefix)?;
        let head = SumFcn::bind_head(&store, prefix)?;
        Ok(Self {
            modality,
            config,
            seed,
            store,
            fcnrd,
            net,
            head,
        })
    }

    /// Network input features on the tape: `f_v`, or `f_a` from FCN-RD.
    pub fn features(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<Var> {
        match &self.fcnrd {
            None => tape.input(input.visual.clone()),
            Some(f) => {
                let w = tape.input(input.audio.clone())?;
                f.forward(tape, &self.store, w)
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<SumFcnOutput> {
        let f = self.features(tape, input)?;
        let taps = self.net.embed(tape, &self.store, f)?;
        let (logits, s) = decode(tape, &self.store, &self.head, taps.e_s)?;
        Ok(SumFcnOutput {
            enc1: taps.enc1,
            e: taps.e,
            e_s: taps.e_s,
            logits,
            s,
        })
    }

    /// FCN-RD output `f_a` for the real frames; audio models only.
    pub fn audio_features(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        if self.fcnrd.is_none() {
            return Err(Error::invalid("audio features requested from a visual model"));
        }
        let mut tape = Tape::new();
        let f = self.features(&mut tape, input)?;
        let real = input.real_frames();
        let v = tape.value(f);
        let d = v.shape()[1];
        Tensor::new(vec![real, d], v.data()[..real * d].to_vec())
    }
}

impl<T: Scalar> Summarizer<T> for UnimodalModel<T> {
    fn variant(&self) -> ModelVariant {
        match self.modality {
            Modality::Visual => ModelVariant::Visual,
            Modality::Audio => ModelVariant::Audio,
        }
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
