//! Parameterized layers built from tape primitives.
//!
//! Each layer only stores [`ParamId`]s. `register` creates freshly
//! initialized parameters under a path prefix; `bind` looks up an existing
//! set by the same prefix, which is how fusion models reuse the tensors of
//! pretrained unimodal networks.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Uniform `[-1/√fan_in, 1/√fan_in]` initialization.
pub fn uniform_init<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    Tensor::from_fn(shape, |_| T::lit(rng.random_range(-bound..=bound)))
}

fn add_pair<T: Scalar>(
    store: &mut ParamStore<T>,
    prefix: &str,
    wshape: &[usize],
    bshape: &[usize],
    fan_in: usize,
    rng: &mut Rng,
) -> Result<(ParamId, ParamId)> {
    let w = store.add(format!("{prefix}/weight"), uniform_init(wshape, fan_in, rng))?;
    let b = store.add(format!("{prefix}/bias"), uniform_init(bshape, fan_in, rng))?;
    Ok((w, b))
}

fn bind_pair<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<(ParamId, ParamId)> {
    Ok((store.id(&format!("{prefix}/weight"))?, store.id(&format!("{prefix}/bias"))?))
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Dense {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        cout: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (weight, bias) = add_pair(store, prefix, &[cin, cout], &[cout], cin, rng)?;
        Ok(Self { weight, bias })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let (weight, bias) = bind_pair(store, prefix)?;
        Ok(Self { weight, bias })
    }

    /// `x: [R, Cin]` → `[R, Cout]`.
    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let (weight, bias) = add_pair(store, prefix, &[kernel, cin, cout], &[cout], kernel * cin, rng)?;
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str, stride: usize, pad: usize) -> Result<Self> {
        let (weight, bias) = bind_pair(store, prefix)?;
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        tape.conv1d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: (usize, usize),
    pub pad: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        cout: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        pad: (usize, usize),
        rng: &mut Rng,
    ) -> Result<Self> {
        let fan_in = kernel.0 * kernel.1 * cin;
        let (weight, bias) = add_pair(store, prefix, &[kernel.0, kernel.1, cin, cout], &[cout], fan_in, rng)?;
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn bind<T: Scalar>(
        store: &ParamStore<T>,
        prefix: &str,
        stride: (usize, usize),
        pad: (usize, usize),
    ) -> Result<Self> {
        let (weight, bias) = bind_pair(store, prefix)?;
        Ok(Self { weight, bias, stride, pad })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        tape.conv2d(x, w, b, self.stride, self.pad)
    }
}

#[derive(Debug, Clone)]
pub struct Deconv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
}

impl Deconv1d {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        // each output frame sees about kernel/stride input frames
        let fan_in = cin * kernel.div_ceil(stride);
        let (weight, bias) = add_pair(store, prefix, &[kernel, cin, cout], &[cout], fan_in, rng)?;
        Ok(Self { weight, bias, stride })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str, stride: usize) -> Result<Self> {
        let (weight, bias) = bind_pair(store, prefix)?;
        Ok(Self { weight, bias, stride })
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight)?;
        let b = tape.param(store, self.bias)?;
        tape.deconv1d(x, w, b, self.stride)
    }
}

/// Single-layer unidirectional GRU.
///
/// Gate blocks in the packed weights are ordered (update, reset, candidate):
///
/// ```text
/// z = σ(x·Wz + bz + h·Uz + cz)
/// r = σ(x·Wr + br + h·Ur + cr)
/// n = tanh(x·Wn + bn + r ⊙ (h·Un + cn))
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
#[derive(Debug, Clone)]
pub struct Gru {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub b_input: ParamId,
    pub b_hidden: ParamId,
    pub hidden: usize,
}

impl Gru {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        cin: usize,
        hidden: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let h3 = 3 * hidden;
        Ok(Self {
            w_input: store.add(format!("{prefix}/w_input"), uniform_init(&[cin, h3], hidden, rng))?,
            w_hidden: store.add(format!("{prefix}/w_hidden"), uniform_init(&[hidden, h3], hidden, rng))?,
            b_input: store.add(format!("{prefix}/b_input"), uniform_init(&[h3], hidden, rng))?,
            b_hidden: store.add(format!("{prefix}/b_hidden"), uniform_init(&[h3], hidden, rng))?,
            hidden,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str) -> Result<Self> {
        let w_hidden = store.id(&format!("{prefix}/w_hidden"))?;
        let hidden = store.value(w_hidden).shape()[0];
        Ok(Self {
            w_input: store.id(&format!("{prefix}/w_input"))?,
            w_hidden,
            b_input: store.id(&format!("{prefix}/b_input"))?,
            b_hidden: store.id(&format!("{prefix}/b_hidden"))?,
            hidden,
        })
    }

    /// Runs the cell over `seq: [T, Cin]` from the initial state
    /// `h0: [1, hidden]`; returns all hidden states `[T, hidden]`.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        seq: Var,
        h0: Var,
    ) -> Result<Var> {
        let h = self.hidden;
        let (steps, _) = tape.value(seq).dims2()?;
        if tape.value(h0).shape() != [1, h] {
            return Err(Error::invalid(format!(
                "gru: initial state must be [1, {h}], got {:?}",
                tape.value(h0).shape()
            )));
        }
        let wi = tape.param(store, self.w_input)?;
        let wh = tape.param(store, self.w_hidden)?;
        let bi = tape.param(store, self.b_input)?;
        let bh = tape.param(store, self.b_hidden)?;

        let xw = tape.matmul(seq, wi)?;
        let xw = tape.add_row(xw, bi)?;
        let x_z = tape.slice_cols(xw, 0, h)?;
        let x_r = tape.slice_cols(xw, h, h)?;
        let x_n = tape.slice_cols(xw, 2 * h, h)?;

        let mut state = h0;
        let mut outputs = Vec::with_capacity(steps);
        for t in 0..steps {
            let hw = tape.matmul(state, wh)?;
            let hw = tape.add_row(hw, bh)?;
            let h_z = tape.slice_cols(hw, 0, h)?;
            let h_r = tape.slice_cols(hw, h, h)?;
            let h_n = tape.slice_cols(hw, 2 * h, h)?;

            let xz = tape.slice_rows(x_z, t, 1)?;
            let xr = tape.slice_rows(x_r, t, 1)?;
            let xn = tape.slice_rows(x_n, t, 1)?;

            let z = tape.add(xz, h_z)?;
            let z = tape.sigmoid(z)?;
            let r = tape.add(xr, h_r)?;
            let r = tape.sigmoid(r)?;
            let rn = tape.mul(r, h_n)?;
            let n = tape.add(xn, rn)?;
            let n = tape.tanh(n)?;

            let keep = tape.affine(z, -T::one(), T::one())?;
            let old = tape.mul(keep, state)?;
            let new = tape.mul(z, n)?;
            state = tape.add(old, new)?;
            outputs.push(state);
        }
        tape.concat_rows(&outputs)
    }
}

/// Multi-head scaled dot-product attention with learned Q/K/V/output
/// projections (`[C, C]` each).
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
    pub output: Dense,
    pub heads: usize,
}

/// Output of [`MultiHeadAttention::forward`]; `weights[h]` is the `[Tq, Tk]`
/// row-stochastic attention matrix of head `h`.
pub struct AttentionOutput {
    pub output: Var,
    pub weights: Vec<Var>,
}

impl MultiHeadAttention {
    pub fn register<T: Scalar>(
        store: &mut ParamStore<T>,
        prefix: &str,
        channels: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        check_heads(channels, heads)?;
        Ok(Self {
            query: Dense::register(store, &format!("{prefix}/query"), channels, channels, rng)?,
            key: Dense::register(store, &format!("{prefix}/key"), channels, channels, rng)?,
            value: Dense::register(store, &format!("{prefix}/value"), channels, channels, rng)?,
            output: Dense::register(store, &format!("{prefix}/output"), channels, channels, rng)?,
            heads,
        })
    }

    pub fn bind<T: Scalar>(store: &ParamStore<T>, prefix: &str, heads: usize) -> Result<Self> {
        Ok(Self {
            query: Dense::bind(store, &format!("{prefix}/query"))?,
            key: Dense::bind(store, &format!("{prefix}/key"))?,
            value: Dense::bind(store, &format!("{prefix}/value"))?,
            output: Dense::bind(store, &format!("{prefix}/output"))?,
            heads,
        })
    }

    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        q: Var,
        k: Var,
        v: Var,
    ) -> Result<AttentionOutput> {
        let (_, c) = tape.value(q).dims2()?;
        check_heads(c, self.heads)?;
        if tape.value(k).shape() != tape.value(v).shape() || tape.value(k).dims2()?.1 != c {
            return Err(Error::invalid(format!(
                "attention: query {:?}, key {:?}, value {:?} disagree",
                tape.value(q).shape(),
                tape.value(k).shape(),
                tape.value(v).shape()
            )));
        }
        let dh = c / self.heads;
        let qp = self.query.forward(tape, store, q)?;
        let kp = self.key.forward(tape, store, k)?;
        let vp = self.value.forward(tape, store, v)?;
        let scale = T::one() / T::lit(dh as f64).sqrt();

        let mut head_outputs = Vec::with_capacity(self.heads);
        let mut weights = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice_cols(qp, h * dh, dh)?;
            let kh = tape.slice_cols(kp, h * dh, dh)?;
            let vh = tape.slice_cols(vp, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale)?;
            let a = tape.softmax(scores)?;
            head_outputs.push(tape.matmul(a, vh)?);
            weights.push(a);
        }
        let joined = if head_outputs.len() == 1 {
            head_outputs[0]
        } else {
            tape.concat_cols(&head_outputs)?
        };
        let output = self.output.forward(tape, store, joined)?;
        Ok(AttentionOutput { output, weights })
    }
}

fn check_heads(channels: usize, heads: usize) -> Result<()> {
    if heads == 0 || channels % heads != 0 {
        return Err(Error::invalid(format!(
            "attention: {channels} channels not divisible into {heads} heads"
        )));
    }
    Ok(())
}
