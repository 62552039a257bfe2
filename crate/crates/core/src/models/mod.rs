//! Summarization networks: the FCN-RD audio reducer, the SUM-FCN
//! encoder-decoder with embedding taps, and the four late-fusion variants.

pub mod checkpoint;
pub mod fcnrd;
pub mod fusion;
pub mod sumfcn;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::record::{pad_to_multiple, VideoRecord};
use crate::error::{Error, Result};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::scalar::Scalar;

pub use fcnrd::FcnRd;
pub use fusion::{FusionModel, FusionOutput};
pub use sumfcn::{SumFcn, SumFcnOutput, UnimodalModel};

/// Frame-axis downsampling factor of the SUM-FCN encoder.
pub const DOWNSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelVariant {
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "a")]
    Audio,
    #[serde(rename = "av_gru")]
    AvGru,
    #[serde(rename = "av_gru_sc")]
    AvGruSc,
    #[serde(rename = "av_att")]
    AvAtt,
    #[serde(rename = "av_att_sc")]
    AvAttSc,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 6] = [
        ModelVariant::Visual,
        ModelVariant::Audio,
        ModelVariant::AvGru,
        ModelVariant::AvGruSc,
        ModelVariant::AvAtt,
        ModelVariant::AvAttSc,
    ];

    pub fn is_fusion(self) -> bool {
        !matches!(self, ModelVariant::Visual | ModelVariant::Audio)
    }

    /// Fusion variants fed by the post-skip embeddings `e^s`.
    pub fn uses_skip_tap(self) -> bool {
        matches!(self, ModelVariant::AvGruSc | ModelVariant::AvAttSc)
    }

    pub fn uses_attention(self) -> bool {
        matches!(self, ModelVariant::AvAtt | ModelVariant::AvAttSc)
    }

    /// Command-line / file-name token.
    pub fn key(self) -> &'static str {
        match self {
            ModelVariant::Visual => "v",
            ModelVariant::Audio => "a",
            ModelVariant::AvGru => "av_gru",
            ModelVariant::AvGruSc => "av_gru_sc",
            ModelVariant::AvAtt => "av_att",
            ModelVariant::AvAttSc => "av_att_sc",
        }
    }

    /// Name used in report tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelVariant::Visual => "V",
            ModelVariant::Audio => "A",
            ModelVariant::AvGru => "AV_GRU",
            ModelVariant::AvGruSc => "AV_GRU_SC",
            ModelVariant::AvAtt => "AV_ATT",
            ModelVariant::AvAttSc => "AV_ATT_SC",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.key().eq_ignore_ascii_case(s) || v.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown model variant {s:?}; expected one of v, a, av_gru, av_gru_sc, av_att, av_att_sc"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    #[serde(rename = "visual")]
    Visual,
    #[serde(rename = "audio")]
    Audio,
}

impl Modality {
    pub fn prefix(self) -> &'static str {
        match self {
            Modality::Visual => "sumfcn_v",
            Modality::Audio => "sumfcn_a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature dimension `D` of both modalities.
    pub feature_dim: usize,
    /// Audio window length `M`.
    pub audio_window: usize,
    /// SUM-FCN channel width `C`.
    pub channels: usize,
    /// Channels of the two FCN-RD convolution blocks.
    pub fcnrd_channels: (usize, usize),
    pub attention_heads: usize,
    /// Add the tapped visual embedding to the fusion block output.
    pub residual: bool,
    /// Subtract each video's per-dimension feature mean before the network.
    pub center_inputs: bool,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, audio_window: usize) -> Self {
        Self {
            feature_dim,
            audio_window,
            channels: 16,
            fcnrd_channels: (4, 4),
            attention_heads: 4,
            residual: true,
            center_inputs: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.audio_window == 0 || self.channels == 0 {
            return Err(Error::invalid("feature_dim, audio_window and channels must be >= 1"));
        }
        if self.feature_dim % 4 != 0 || self.audio_window % 4 != 0 {
            return Err(Error::invalid(format!(
                "FCN-RD pools M×D twice by 2; M = {} and D = {} must be divisible by 4",
                self.audio_window, self.feature_dim
            )));
        }
        if self.fcnrd_channels.0 == 0 || self.fcnrd_channels.1 == 0 {
            return Err(Error::invalid("FCN-RD channels must be >= 1"));
        }
        if self.attention_heads == 0 || self.channels % self.attention_heads != 0 {
            return Err(Error::invalid(format!(
                "{} channels not divisible into {} attention heads",
                self.channels, self.attention_heads
            )));
        }
        Ok(())
    }
}

/// A video converted to network inputs: zero-padded to a multiple of
/// [`DOWNSAMPLE`] frames, optionally centered, in the model's scalar type.
#[derive(Debug, Clone)]
pub struct ModelInput<T> {
    pub id: String,
    /// `[N', D]`
    pub visual: Tensor<T>,
    /// `[N', M, D]`
    pub audio: Tensor<T>,
    pub labels: Vec<u8>,
    pub importance: Vec<f64>,
    /// `true` on real frames, `false` on padding.
    pub mask: Vec<bool>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn real_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Subtracts the mean over real rows from every real row, per column of the
/// trailing `width` values.
fn center_rows(data: &mut [f32], mask: &[bool], width: usize) {
    let per_frame = data.len() / mask.len();
    let real = mask.iter().filter(|&&m| m).count() as f64;
    let mut mean = vec![0.0f64; width];
    for (t, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (i, v) in data[t * per_frame..(t + 1) * per_frame].iter().enumerate() {
            mean[i % width] += *v as f64;
        }
    }
    let count = real * (per_frame / width) as f64;
    for m in &mut mean {
        *m /= count;
    }
    for (t, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for (i, v) in data[t * per_frame..(t + 1) * per_frame].iter_mut().enumerate() {
            *v = (*v as f64 - mean[i % width]) as f32;
        }
    }
}

pub fn prepare_input<T: Scalar>(record: &VideoRecord, config: &ModelConfig) -> Result<ModelInput<T>> {
    record.validate()?;
    if record.feature_dim() != config.feature_dim || record.audio_window() != config.audio_window {
        return Err(Error::invalid(format!(
            "video {}: features are D = {}, M = {}, model expects D = {}, M = {}",
            record.id,
            record.feature_dim(),
            record.audio_window(),
            config.feature_dim,
            config.audio_window
        )));
    }
    let padded = pad_to_multiple(record, DOWNSAMPLE)?;
    let mut visual = padded.record.visual.clone();
    let mut audio = padded.record.audio.clone();
    if config.center_inputs {
        center_rows(visual.data_mut(), &padded.mask, config.feature_dim);
        center_rows(audio.data_mut(), &padded.mask, config.feature_dim);
    }
    Ok(ModelInput {
        id: record.id.clone(),
        visual: visual.cast(),
        audio: audio.cast(),
        labels: padded.record.labels,
        importance: padded.record.importance,
        mask: padded.mask,
    })
}

/// Common interface of trainable summarizers.
pub trait Summarizer<T: Scalar>: Send {
    fn variant(&self) -> ModelVariant;
    fn config(&self) -> &ModelConfig;
    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;
    /// Per-frame class probabilities `[N', 2]` (column 0 = key frame).
    fn scores(&self, tape: &mut Tape<T>, input: &ModelInput<T>) -> Result<Var>;

    /// Inference without gradient bookkeeping beyond one tape.
    fn predict(&self, input: &ModelInput<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let s = self.scores(&mut tape, input)?;
        Ok(tape.value(s).clone())
    }
}
