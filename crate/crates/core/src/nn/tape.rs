//! Reverse-mode differentiation over a recorded operation tape.
//!
//! Every forward call appends a node holding its value and the operation
//! that produced it. [`Tape::backward`] walks the nodes in reverse and
//! applies each operation's adjoint. Nodes that do not depend on any
//! trainable leaf are skipped, so frozen sub-networks cost a forward pass
//! only and never receive gradient.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::ops;
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    Param,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize, pad: usize },
    Conv2d { x: Var, w: Var, b: Var, stride: (usize, usize), pad: (usize, usize) },
    MaxPool { x: Var, argmax: Vec<usize> },
    Deconv1d { x: Var, w: Var, b: Var, stride: usize },
    Reshape(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Sum(Var),
    PairNll { s: Var, targets: Vec<u8>, coef: Vec<T>, floor: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input (no gradient).
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf, false, "input")
    }

    /// Free leaf whose gradient is tracked; used for gradient checks.
    pub fn variable(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf, true, "variable")
    }

    /// Places a parameter on the tape once; later calls return the same node.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let p = store.get(id);
        let v = self.push(p.value.clone(), Op::Param, !p.frozen, &p.name)?;
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::zip_map(self.value(a), self.value(b), "add", |x, y| x + y)?;
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Add(a, b), rg, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::zip_map(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Sub(a, b), rg, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::zip_map(self.value(a), self.value(b), "mul", |x, y| x * y)?;
        let rg = self.rg(&[a, b]);
        self.push(y, Op::Mul(a, b), rg, "mul")
    }

    /// `scale · x + shift`.
    pub fn affine(&mut self, x: Var, scale: T, shift: T) -> Result<Var> {
        let y = self.value(x).map(|v| scale * v + shift);
        let rg = self.rg(&[x]);
        self.push(y, Op::Affine(x, scale), rg, "affine")
    }

    pub fn scale(&mut self, x: Var, scale: T) -> Result<Var> {
        self.affine(x, scale, T::zero())
    }

    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let y = ops::add_row(self.value(x), self.value(b))?;
        let rg = self.rg(&[x, b]);
        self.push(y, Op::AddRow(x, b), rg, "add_row")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = ops::matmul(self.value(a), self.value(b))?;
        let rg = self.rg(&[a, b]);
        self.push(y, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let y = ops::transpose(self.value(x))?;
        let rg = self.rg(&[x]);
        self.push(y, Op::Transpose(x), rg, "transpose")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = ops::relu(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Relu(x), rg, "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y = ops::sigmoid(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Sigmoid(x), rg, "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let y = ops::tanh(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Tanh(x), rg, "tanh")
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let y = ops::softmax(self.value(x));
        let rg = self.rg(&[x]);
        self.push(y, Op::Softmax(x), rg, "softmax")
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = ops::conv1d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let rg = self.rg(&[x, w, b]);
        self.push(y, Op::Conv1d { x, w, b, stride, pad }, rg, "conv1d")
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: (usize, usize), pad: (usize, usize)) -> Result<Var> {
        let y = ops::conv2d(self.value(x), self.value(w), self.value(b), stride, pad)?;
        let rg = self.rg(&[x, w, b]);
        self.push(y, Op::Conv2d { x, w, b, stride, pad }, rg, "conv2d")
    }

    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var> {
        let (y, argmax) = ops::maxpool1d(self.value(x), window, stride)?;
        let rg = self.rg(&[x]);
        self.push(y, Op::MaxPool { x, argmax }, rg, "maxpool1d")
    }

    pub fn maxpool2d(&mut self, x: Var, window: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let (y, argmax) = ops::maxpool2d(self.value(x), window, stride)?;
        let rg = self.rg(&[x]);
        self.push(y, Op::MaxPool { x, argmax }, rg, "maxpool2d")
    }

    pub fn deconv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let y = ops::deconv1d(self.value(x), self.value(w), self.value(b), stride)?;
        let rg = self.rg(&[x, w, b]);
        self.push(y, Op::Deconv1d { x, w, b, stride }, rg, "deconv1d")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = self.value(x).reshape(shape)?;
        let rg = self.rg(&[x]);
        self.push(y, Op::Reshape(x), rg, "reshape")
    }

    /// Rows `start..start+len` of a rank-2 tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        if len == 0 || start + len > r {
            return Err(Error::invalid(format!("slice_rows {start}+{len} out of {r} rows")));
        }
        let y = Tensor::new(vec![len, c], xv.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(&[x]);
        self.push(y, Op::SliceRows { x, start }, rg, "slice_rows")
    }

    /// Columns `start..start+len` of a rank-2 tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.dims2()?;
        if len == 0 || start + len > c {
            return Err(Error::invalid(format!("slice_cols {start}+{len} out of {c} columns")));
        }
        let mut out = Vec::with_capacity(r * len);
        for row in xv.data().chunks(c) {
            out.extend_from_slice(&row[start..start + len]);
        }
        let y = Tensor::new(vec![r, len], out)?;
        let rg = self.rg(&[x]);
        self.push(y, Op::SliceCols { x, start }, rg, "slice_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.concat_check(parts, 1)?;
        let mut out = Vec::new();
        let mut rows = 0;
        for p in parts {
            let v = self.value(*p);
            rows += v.shape()[0];
            out.extend_from_slice(v.data());
        }
        let y = Tensor::new(vec![rows, c], out)?;
        let rg = self.rg(parts);
        self.push(y, Op::ConcatRows(parts.to_vec()), rg, "concat_rows")
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.concat_check(parts, 0)?;
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).shape()[1]).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[i * w..(i + 1) * w]);
            }
        }
        let y = Tensor::new(vec![r, total], out)?;
        let rg = self.rg(parts);
        self.push(y, Op::ConcatCols(parts.to_vec()), rg, "concat_cols")
    }

    /// Checks that all parts share the extent of `axis` and returns it.
    fn concat_check(&self, parts: &[Var], axis: usize) -> Result<usize> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let extent = self.value(*first).dims2().map(|(r, c)| if axis == 0 { r } else { c })?;
        for p in parts {
            let (r, c) = self.value(*p).dims2()?;
            if (if axis == 0 { r } else { c }) != extent {
                return Err(Error::invalid("concat: mismatched extents"));
            }
        }
        Ok(extent)
    }

    /// Sum of all elements → shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let y = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(y, Op::Sum(x), rg, "sum")
    }

    /// Scalar weighted pair log-loss; see [`ops::weighted_pair_nll`].
    pub fn pair_nll(&mut self, s: Var, targets: Vec<u8>, coef: Vec<T>, floor: T) -> Result<Var> {
        let y = Tensor::scalar(ops::weighted_pair_nll(self.value(s), &targets, &coef, floor)?);
        let rg = self.rg(&[s]);
        self.push(
            y,
            Op::PairNll {
                s,
                targets,
                coef,
                floor,
            },
            rg,
            "weighted loss",
        )
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::State("backward called on a value not recorded on this tape".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(self.nodes[loss.0].value.shape()));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        let params = self
            .params
            .iter()
            .filter(|(_, v)| self.nodes[v.0].requires_grad)
            .map(|(&id, &v)| (id, v))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn propagate(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let val = |v: Var| &self.nodes[v.0].value;
        let mut send = |v: Var, t: Tensor<T>| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot => *slot = Some(t),
            }
        };
        let y = &self.nodes[i].value;
        match &self.nodes[i].op {
            Op::Leaf | Op::Param => {}
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::Sub(a, b) => {
                send(*a, g.clone());
                send(*b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                send(*a, ops::zip_map(g, val(*b), "mul", |x, y| x * y)?);
                send(*b, ops::zip_map(g, val(*a), "mul", |x, y| x * y)?);
            }
            Op::Affine(x, s) => {
                let s = *s;
                send(*x, g.map(|v| v * s));
            }
            Op::AddRow(x, b) => {
                let c = val(*b).len();
                let mut gb = Tensor::zeros(&[c]);
                for row in g.data().chunks(c) {
                    for (a, &v) in gb.data_mut().iter_mut().zip(row) {
                        *a += v;
                    }
                }
                send(*x, g.clone());
                send(*b, gb);
            }
            Op::MatMul(a, b) => {
                if self.nodes[a.0].requires_grad {
                    send(*a, ops::matmul(g, &ops::transpose(val(*b))?)?);
                }
                if self.nodes[b.0].requires_grad {
                    send(*b, ops::matmul(&ops::transpose(val(*a))?, g)?);
                }
            }
            Op::Transpose(x) => send(*x, ops::transpose(g)?),
            Op::Relu(x) => {
                send(*x, ops::zip_map(g, val(*x), "relu", |g, x| if x > T::zero() { g } else { T::zero() })?);
            }
            Op::Sigmoid(x) => {
                send(*x, ops::zip_map(g, y, "sigmoid", |g, s| g * s * (T::one() - s))?);
            }
            Op::Tanh(x) => {
                send(*x, ops::zip_map(g, y, "tanh", |g, t| g * (T::one() - t * t))?);
            }
            Op::Softmax(x) => send(*x, ops::softmax_backward(y, g)),
            Op::Conv1d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = ops::conv1d_backward(val(*x), val(*w), g, *stride, *pad);
                send(*x, gx);
                send(*w, gw);
                send(*b, gb);
            }
            Op::Conv2d { x, w, b, stride, pad } => {
                let (gx, gw, gb) = ops::conv2d_backward(val(*x), val(*w), g, *stride, *pad);
                send(*x, gx);
                send(*w, gw);
                send(*b, gb);
            }
            Op::MaxPool { x, argmax } => send(*x, ops::maxpool_backward(val(*x).shape(), argmax, g)),
            Op::Deconv1d { x, w, b, stride } => {
                let (gx, gw, gb) = ops::deconv1d_backward(val(*x), val(*w), g, *stride);
                send(*x, gx);
                send(*w, gw);
                send(*b, gb);
            }
            Op::Reshape(x) => send(*x, g.reshape(val(*x).shape())?),
            Op::SliceRows { x, start } => {
                let xv = val(*x);
                let c = xv.shape()[1];
                let mut gx = Tensor::zeros(xv.shape());
                gx.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(*x, gx);
            }
            Op::SliceCols { x, start } => {
                let xv = val(*x);
                let (r, c) = (xv.shape()[0], xv.shape()[1]);
                let w = g.shape()[1];
                let mut gx = Tensor::zeros(xv.shape());
                for row in 0..r {
                    gx.data_mut()[row * c + start..row * c + start + w]
                        .copy_from_slice(&g.data()[row * w..(row + 1) * w]);
                }
                send(*x, gx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    send(*p, Tensor::new(val(*p).shape().to_vec(), g.data()[offset..offset + n].to_vec())?);
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.shape()[1];
                let mut start = 0;
                for p in parts {
                    let (r, w) = (val(*p).shape()[0], val(*p).shape()[1]);
                    let mut out = Vec::with_capacity(r * w);
                    for row in 0..r {
                        out.extend_from_slice(&g.data()[row * total + start..row * total + start + w]);
                    }
                    send(*p, Tensor::new(vec![r, w], out)?);
                    start += w;
                }
            }
            Op::Sum(x) => {
                let s = g.data()[0];
                send(*x, Tensor::full(val(*x).shape(), s));
            }
            Op::PairNll { s, targets, coef, floor } => {
                send(*s, ops::weighted_pair_nll_backward(val(*s), targets, coef, *floor, g.data()[0]));
            }
        }
        Ok(())
    }
}

/// Result of a reverse sweep.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a node; `None` when the node does not
    /// require a gradient or is unreachable from the loss.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adds parameter gradients into the store's gradient buffers. Frozen
    /// parameters are never touched.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for &(id, v) in &self.params {
            let p = store.get_mut(id);
            if p.frozen {
                continue;
            }
            if let Some(g) = &self.grads[v.0] {
                g.ensure_finite(&format!("gradient of {}", p.name))?;
                p.grad.add_assign(g);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::from_f64(&[2, 3], &[1.0, -2.0, 3.0, 0.0, 5.0, 6.0]).unwrap()).unwrap();
        let loss = tape.sum(x).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_scaled_loss_has_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::from_f64(&[3], &[0.3, -0.7, 2.0]).unwrap()).unwrap();
        let y = tape.tanh(x).unwrap();
        let s = tape.sum(y).unwrap();
        let loss = tape.scale(s, 0.0).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(x).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut other = Tape::<f64>::new();
        let v = other.input(Tensor::scalar(1.0)).unwrap();
        let _ = other.sum(v).unwrap();
        let empty = Tape::<f64>::new();
        assert!(matches!(empty.backward(Var(1)), Err(Error::State(_))));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.variable(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn frozen_parameter_gets_no_gradient() {
        let mut store = ParamStore::<f64>::new();
        let a = store.add("a", Tensor::from_f64(&[2], &[1.0, 2.0]).unwrap()).unwrap();
        let b = store.add("b", Tensor::from_f64(&[2], &[3.0, 4.0]).unwrap()).unwrap();
        store.get_mut(a).frozen = true;
        let mut tape = Tape::new();
        let va = tape.param(&store, a).unwrap();
        let vb = tape.param(&store, b).unwrap();
        let p = tape.mul(va, vb).unwrap();
        let loss = tape.sum(p).unwrap();
        let g = tape.backward(loss).unwrap();
        assert!(g.wrt(va).is_none());
        g.accumulate_into(&mut store).unwrap();
        assert_eq!(store.get(a).grad.data(), &[0.0, 0.0]);
        assert_eq!(store.get(b).grad.data(), &[1.0, 2.0]);
    }

    #[test]
    fn non_finite_forward_is_hard_error() {
        let mut tape = Tape::<f64>::new();
        let x = tape.input(Tensor::scalar(f64::MAX)).unwrap();
        assert!(matches!(tape.affine(x, 10.0, 0.0), Err(Error::Numerical(_))));
    }
}
