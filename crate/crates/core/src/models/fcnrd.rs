//! FCN-RD: reduces each frame's `M×D` audio embedding window to one
//! `D`-vector with two conv2d + maxpool blocks and a dense layer.

use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::nn::layers::{Conv2d, Dense};
use crate::nn::{ParamStore, Tape, Var};
use crate::rng::Rng;
use crate::scalar::Scalar;

pub const PREFIX: &str = "fcnrd";

#[derive(Debug, Clone)]
pub struct FcnRd {
    pub block1: Conv2d,
    pub block2: Conv2d,
    pub dense: Dense,
    pub audio_window: usize,
    pub feature_dim: usize,
}

impl FcnRd {
    fn flat_len(config: &ModelConfig) -> usize {
        (config.audio_window / 4) * (config.feature_dim / 4) * config.fcnrd_channels.1
    }

    pub fn register<T: Scalar>(store: &mut ParamStore<T>, config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let (c1, c2) = config.fcnrd_channels;
        Ok(Self {
            block1: Conv2d::register(store, &format!("{PREFIX}/conv1"), 1, c1, (3, 3), (1, 1), (1, 1), rng)?,
            block2: Conv2d::register(store, &format!("{PREFIX}/conv2"), c1, c2, (3, 3), (1, 1), (1, 1), rng)?,
            dense: Dense::register(
                store,
                &format!("{PREFIX}/dense"),
                Self::flat_len(config),
                config.feature_dim,
                rng,
            )?,
            audio_window: config.audio_window,
            feature_dim: config.feature_dim,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, config: &ModelConfig) -> Result<Self> {
        Ok(Self {
            block1: Conv2d::bind(store, &format!("{PREFIX}/conv1"), (1, 1), (1, 1))?,
            block2: Conv2d::bind(store, &format!("{PREFIX}/conv2"), (1, 1), (1, 1))?,
            dense: Dense::bind(store, &format!("{PREFIX}/dense"))?,
            audio_window: config.audio_window,
            feature_dim: config.feature_dim,
        })
    }

    /// `f_w: [N, M, D]` → `f_a: [N, D]`; frames are processed independently.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, f_w: Var) -> Result<Var> {
        let (m, d) = (self.audio_window, self.feature_dim);
        let n = match tape.value(f_w).shape() {
            [n, wm, wd] if *wm == m && *wd == d => *n,
            [wm, wd] if *wm == m && *wd == d => 1,
            s => {
                return Err(Error::invalid(format!(
                    "fcnrd: expected audio windows [N, {m}, {d}], got {s:?}"
                )))
            }
        };
        let x = tape.reshape(f_w, &[n, m, d, 1])?;
        let x = self.block1.forward(tape, store, x)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool2d(x, (2, 2), (2, 2))?;
        let x = self.block2.forward(tape, store, x)?;
        let x = tape.relu(x)?;
        let x = tape.maxpool2d(x, (2, 2), (2, 2))?;
        let flat = tape.value(x).len() / n;
        let x = tape.reshape(x, &[n, flat])?;
        self.dense.forward(tape, store, x)
    }
}
