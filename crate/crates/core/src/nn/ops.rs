//! Tensor kernels with their hand-written adjoints.
//!
//! Forward kernels are usable directly on tensors; the tape in
//! [`crate::nn::tape`] records them and calls the matching `*_backward`
//! function during the reverse sweep.

use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

fn out_len(input: usize, pad: usize, k: usize, stride: usize, what: &str) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid(format!("{what}: stride must be >= 1")));
    }
    let padded = input + 2 * pad;
    if k == 0 || padded < k {
        return Err(Error::invalid(format!(
            "{what}: window {k} larger than padded extent {padded}"
        )));
    }
    Ok((padded - k) / stride + 1)
}

// ---------------------------------------------------------------- conv1d

/// Temporal cross-correlation. `x: [T, Cin]`, `w: [k, Cin, Cout]`,
/// `b: [Cout]` → `[T', Cout]` with `T' = (T + 2·pad − k)/stride + 1`.
pub fn conv1d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (t_in, cin) = x.dims2()?;
    let (k, wcin, cout) = match w.shape() {
        [k, c, o] => (*k, *c, *o),
        s => return Err(Error::invalid(format!("conv1d: weight must be [k, Cin, Cout], got {s:?}"))),
    };
    if wcin != cin || b.shape() != [cout] {
        return Err(Error::invalid(format!(
            "conv1d: input {:?}, weight {:?} and bias {:?} disagree",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let t_out = out_len(t_in, pad, k, stride, "conv1d")?;
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut out = vec![T::zero(); t_out * cout];
    for t in 0..t_out {
        let orow = &mut out[t * cout..(t + 1) * cout];
        orow.copy_from_slice(bd);
        for j in 0..k {
            let src = (t * stride + j) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let xrow = &xd[src as usize * cin..(src as usize + 1) * cin];
            for (c, &xv) in xrow.iter().enumerate() {
                let wrow = &wd[(j * cin + c) * cout..(j * cin + c + 1) * cout];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![t_out, cout], out)
}

pub(crate) fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (t_in, cin) = (x.shape()[0], x.shape()[1]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let t_out = gy.shape()[0];
    let (xd, wd, gd) = (x.data(), w.data(), gy.data());
    let mut gx = vec![T::zero(); xd.len()];
    let mut gw = vec![T::zero(); wd.len()];
    let mut gb = vec![T::zero(); cout];
    for t in 0..t_out {
        let grow = &gd[t * cout..(t + 1) * cout];
        for (b, &g) in gb.iter_mut().zip(grow) {
            *b += g;
        }
        for j in 0..k {
            let src = (t * stride + j) as isize - pad as isize;
            if src < 0 || src as usize >= t_in {
                continue;
            }
            let s = src as usize;
            for c in 0..cin {
                let xv = xd[s * cin + c];
                let base = (j * cin + c) * cout;
                let mut acc = T::zero();
                for o in 0..cout {
                    acc += grow[o] * wd[base + o];
                    gw[base + o] += xv * grow[o];
                }
                gx[s * cin + c] += acc;
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("shape"),
        Tensor::new(vec![cout], gb).expect("shape"),
    )
}

// ---------------------------------------------------------------- conv2d

fn as_batched4<T: Scalar>(x: &Tensor<T>, what: &str) -> Result<[usize; 4]> {
    match x.shape() {
        [h, w, c] => Ok([1, *h, *w, *c]),
        [b, h, w, c] => Ok([*b, *h, *w, *c]),
        s => Err(Error::invalid(format!("{what}: expected [H, W, C] or [B, H, W, C], got {s:?}"))),
    }
}

/// 2-D cross-correlation over `[H, W, Cin]` or batched `[B, H, W, Cin]`
/// input with weight `[kh, kw, Cin, Cout]`. Output keeps the input rank.
pub fn conv2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> Result<Tensor<T>> {
    let [nb, h, wd_in, cin] = as_batched4(x, "conv2d")?;
    let (kh, kw, wcin, cout) = match w.shape() {
        [a, b, c, d] => (*a, *b, *c, *d),
        s => return Err(Error::invalid(format!("conv2d: weight must be [kh, kw, Cin, Cout], got {s:?}"))),
    };
    if wcin != cin || b.shape() != [cout] {
        return Err(Error::invalid(format!(
            "conv2d: input {:?}, weight {:?} and bias {:?} disagree",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let ho = out_len(h, pad.0, kh, stride.0, "conv2d")?;
    let wo = out_len(wd_in, pad.1, kw, stride.1, "conv2d")?;
    let (xd, wt, bd) = (x.data(), w.data(), b.data());
    let mut out = vec![T::zero(); nb * ho * wo * cout];
    for n in 0..nb {
        for oy in 0..ho {
            for ox in 0..wo {
                let obase = ((n * ho + oy) * wo + ox) * cout;
                let orow = &mut out[obase..obase + cout];
                orow.copy_from_slice(bd);
                for dy in 0..kh {
                    let iy = (oy * stride.0 + dy) as isize - pad.0 as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for dx in 0..kw {
                        let ix = (ox * stride.1 + dx) as isize - pad.1 as isize;
                        if ix < 0 || ix as usize >= wd_in {
                            continue;
                        }
                        let ibase = ((n * h + iy as usize) * wd_in + ix as usize) * cin;
                        for c in 0..cin {
                            let xv = xd[ibase + c];
                            let wbase = ((dy * kw + dx) * cin + c) * cout;
                            for (o, &wv) in orow.iter_mut().zip(&wt[wbase..wbase + cout]) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    let shape = if x.ndim() == 3 {
        vec![ho, wo, cout]
    } else {
        vec![nb, ho, wo, cout]
    };
    Tensor::new(shape, out)
}

pub(crate) fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: (usize, usize),
    pad: (usize, usize),
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let [nb, h, wd_in, cin] = as_batched4(x, "conv2d").expect("validated in forward");
    let (kh, kw, cout) = (w.shape()[0], w.shape()[1], w.shape()[3]);
    let [_, ho, wo, _] = as_batched4(gy, "conv2d").expect("validated in forward");
    let (xd, wt, gd) = (x.data(), w.data(), gy.data());
    let mut gx = vec![T::zero(); xd.len()];
    let mut gw = vec![T::zero(); wt.len()];
    let mut gb = vec![T::zero(); cout];
    for n in 0..nb {
        for oy in 0..ho {
            for ox in 0..wo {
                let obase = ((n * ho + oy) * wo + ox) * cout;
                let grow = &gd[obase..obase + cout];
                for (b, &g) in gb.iter_mut().zip(grow) {
                    *b += g;
                }
                for dy in 0..kh {
                    let iy = (oy * stride.0 + dy) as isize - pad.0 as isize;
                    if iy < 0 || iy as usize >= h {
                        continue;
                    }
                    for dx in 0..kw {
                        let ix = (ox * stride.1 + dx) as isize - pad.1 as isize;
                        if ix < 0 || ix as usize >= wd_in {
                            continue;
                        }
                        let ibase = ((n * h + iy as usize) * wd_in + ix as usize) * cin;
                        for c in 0..cin {
                            let xv = xd[ibase + c];
                            let wbase = ((dy * kw + dx) * cin + c) * cout;
                            let mut acc = T::zero();
                            for o in 0..cout {
                                acc += grow[o] * wt[wbase + o];
                                gw[wbase + o] += xv * grow[o];
                            }
                            gx[ibase + c] += acc;
                        }
                    }
                }
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("shape"),
        Tensor::new(vec![cout], gb).expect("shape"),
    )
}

// ---------------------------------------------------------------- pooling

/// Max pooling over the leading (time) axis of `[T]` or `[T, C]` input.
/// Returns the pooled tensor and, per output element, the flat index of the
/// input element that won (the first maximal one on ties).
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (t_in, c) = match x.shape() {
        [t] => (*t, 1),
        [t, c] => (*t, *c),
        s => return Err(Error::invalid(format!("maxpool1d: expected [T] or [T, C], got {s:?}"))),
    };
    let t_out = out_len(t_in, 0, window, stride, "maxpool1d")?;
    let xd = x.data();
    let mut out = Vec::with_capacity(t_out * c);
    let mut arg = Vec::with_capacity(t_out * c);
    for t in 0..t_out {
        for ch in 0..c {
            let mut best = (t * stride) * c + ch;
            for j in 1..window {
                let idx = (t * stride + j) * c + ch;
                if xd[idx] > xd[best] {
                    best = idx;
                }
            }
            out.push(xd[best]);
            arg.push(best);
        }
    }
    let shape = if x.ndim() == 1 { vec![t_out] } else { vec![t_out, c] };
    Ok((Tensor::new(shape, out)?, arg))
}

/// 2-D max pooling over `[H, W, C]` or `[B, H, W, C]`; same tie rule.
pub fn maxpool2d<T: Scalar>(
    x: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [nb, h, w, c] = as_batched4(x, "maxpool2d")?;
    let ho = out_len(h, 0, window.0, stride.0, "maxpool2d")?;
    let wo = out_len(w, 0, window.1, stride.1, "maxpool2d")?;
    let xd = x.data();
    let mut out = Vec::with_capacity(nb * ho * wo * c);
    let mut arg = Vec::with_capacity(nb * ho * wo * c);
    for n in 0..nb {
        for oy in 0..ho {
            for ox in 0..wo {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for dy in 0..window.0 {
                        for dx in 0..window.1 {
                            let idx = ((n * h + oy * stride.0 + dy) * w + ox * stride.1 + dx) * c + ch;
                            if best == usize::MAX || xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    arg.push(best);
                }
            }
        }
    }
    let shape = if x.ndim() == 3 {
        vec![ho, wo, c]
    } else {
        vec![nb, ho, wo, c]
    };
    Ok((Tensor::new(shape, out)?, arg))
}

pub(crate) fn maxpool_backward<T: Scalar>(x_shape: &[usize], argmax: &[usize], gy: &Tensor<T>) -> Tensor<T> {
    let mut gx = Tensor::zeros(x_shape);
    let gd = gx.data_mut();
    for (&src, &g) in argmax.iter().zip(gy.data()) {
        gd[src] += g;
    }
    gx
}

// ---------------------------------------------------------------- deconv1d

/// Transposed temporal convolution. `x: [T, Cin]`, `w: [k, Cin, Cout]` with
/// `k >= stride`; the full `(T−1)·stride + k` output is cropped by
/// `(k − stride)/2` frames at the front so exactly `T·stride` frames remain.
pub fn deconv1d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>, stride: usize) -> Result<Tensor<T>> {
    let (t_in, cin) = x.dims2()?;
    let (k, wcin, cout) = match w.shape() {
        [k, c, o] => (*k, *c, *o),
        s => return Err(Error::invalid(format!("deconv1d: weight must be [k, Cin, Cout], got {s:?}"))),
    };
    if stride == 0 || k < stride {
        return Err(Error::invalid(format!("deconv1d: need 1 <= stride <= k, got stride {stride}, k {k}")));
    }
    if wcin != cin || b.shape() != [cout] {
        return Err(Error::invalid(format!(
            "deconv1d: input {:?}, weight {:?} and bias {:?} disagree",
            x.shape(),
            w.shape(),
            b.shape()
        )));
    }
    let crop = (k - stride) / 2;
    let t_out = t_in * stride;
    let (xd, wd, bd) = (x.data(), w.data(), b.data());
    let mut out = Vec::with_capacity(t_out * cout);
    for _ in 0..t_out {
        out.extend_from_slice(bd);
    }
    for t in 0..t_in {
        for j in 0..k {
            let dst = (t * stride + j) as isize - crop as isize;
            if dst < 0 || dst as usize >= t_out {
                continue;
            }
            let orow = &mut out[dst as usize * cout..(dst as usize + 1) * cout];
            for c in 0..cin {
                let xv = xd[t * cin + c];
                let wbase = (j * cin + c) * cout;
                for (o, &wv) in orow.iter_mut().zip(&wd[wbase..wbase + cout]) {
                    *o += xv * wv;
                }
            }
        }
    }
    Tensor::new(vec![t_out, cout], out)
}

pub(crate) fn deconv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    stride: usize,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (t_in, cin) = (x.shape()[0], x.shape()[1]);
    let (k, cout) = (w.shape()[0], w.shape()[2]);
    let crop = (k - stride) / 2;
    let t_out = gy.shape()[0];
    let (xd, wd, gd) = (x.data(), w.data(), gy.data());
    let mut gx = vec![T::zero(); xd.len()];
    let mut gw = vec![T::zero(); wd.len()];
    let mut gb = vec![T::zero(); cout];
    for t in 0..t_out {
        for o in 0..cout {
            gb[o] += gd[t * cout + o];
        }
    }
    for t in 0..t_in {
        for j in 0..k {
            let dst = (t * stride + j) as isize - crop as isize;
            if dst < 0 || dst as usize >= t_out {
                continue;
            }
            let grow = &gd[dst as usize * cout..(dst as usize + 1) * cout];
            for c in 0..cin {
                let xv = xd[t * cin + c];
                let wbase = (j * cin + c) * cout;
                let mut acc = T::zero();
                for o in 0..cout {
                    acc += grow[o] * wd[wbase + o];
                    gw[wbase + o] += xv * grow[o];
                }
                gx[t * cin + c] += acc;
            }
        }
    }
    (
        Tensor::new(x.shape().to_vec(), gx).expect("shape"),
        Tensor::new(w.shape().to_vec(), gw).expect("shape"),
        Tensor::new(vec![cout], gb).expect("shape"),
    )
}

// ---------------------------------------------------------------- dense algebra

pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, k) = a.dims2()?;
    let (k2, c) = b.dims2()?;
    if k != k2 {
        return Err(Error::invalid(format!(
            "matmul: inner extents differ ({:?} x {:?})",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        let orow = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&bd[p * c..(p + 1) * c]) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![r, c], out)
}

pub fn transpose<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = x.dims2()?;
    let xd = x.data();
    let mut out = vec![T::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = xd[i * c + j];
        }
    }
    Tensor::new(vec![c, r], out)
}

/// Fully connected layer on the last axis: `x: [..., Cin]`, `w: [Cin, Cout]`.
pub fn dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let cin = *x.shape().last().unwrap_or(&0);
    let rows = x.len() / cin.max(1);
    let y = matmul(&x.reshape(&[rows, cin])?, w)?;
    let y = add_row(&y, b)?;
    let mut shape = x.shape().to_vec();
    *shape.last_mut().expect("rank >= 1") = y.shape()[1];
    y.reshape(&shape)
}

/// Adds `b: [C]` to every row of `x: [R, C]`.
pub fn add_row<T: Scalar>(x: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = x.dims2()?;
    if b.shape() != [c] {
        return Err(Error::invalid(format!(
            "row bias {:?} does not match {:?}",
            b.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Ok(out)
}

pub(crate) fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::invalid(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

// ---------------------------------------------------------------- activations

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| {
        if v >= T::zero() {
            T::one() / (T::one() + (-v).exp())
        } else {
            let e = v.exp();
            e / (T::one() + e)
        }
    })
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Softmax over the last axis, stabilized by subtracting the row maximum.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let c = *x.shape().last().expect("rank >= 1");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(c) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub(crate) fn softmax_backward<T: Scalar>(y: &Tensor<T>, gy: &Tensor<T>) -> Tensor<T> {
    let c = *y.shape().last().expect("rank >= 1");
    let mut gx = gy.clone();
    for (grow, yrow) in gx.data_mut().chunks_mut(c).zip(y.data().chunks(c)) {
        let dot: T = grow.iter().zip(yrow).map(|(&g, &p)| g * p).sum();
        for (g, &p) in grow.iter_mut().zip(yrow) {
            *g = p * (*g - dot);
        }
    }
    gx
}

// ---------------------------------------------------------------- loss

/// Weighted negative log-likelihood over probability pairs.
///
/// `s: [N, 2]` holds (positive, negative) class probabilities; frame `j`
/// contributes `−coef[j]·log(max(s[j][1−z_j], floor))`, i.e. the positive
/// column when `z_j = 1`. Frames with `coef[j] == 0` are skipped entirely so
/// padded frames cannot perturb the sum.
pub fn weighted_pair_nll<T: Scalar>(s: &Tensor<T>, targets: &[u8], coef: &[T], floor: T) -> Result<T> {
    let (n, c) = s.dims2()?;
    if c != 2 || targets.len() != n || coef.len() != n {
        return Err(Error::invalid(format!(
            "weighted loss: scores {:?} vs {} targets / {} weights",
            s.shape(),
            targets.len(),
            coef.len()
        )));
    }
    let mut total = T::zero();
    for j in 0..n {
        if coef[j] == T::zero() {
            continue;
        }
        let p = if targets[j] == 1 { s.at2(j, 0) } else { s.at2(j, 1) };
        total += coef[j] * p.max(floor).ln();
    }
    Ok(-total)
}

pub(crate) fn weighted_pair_nll_backward<T: Scalar>(
    s: &Tensor<T>,
    targets: &[u8],
    coef: &[T],
    floor: T,
    g: T,
) -> Tensor<T> {
    let mut gs = Tensor::zeros(s.shape());
    let gd = gs.data_mut();
    for j in 0..targets.len() {
        if coef[j] == T::zero() {
            continue;
        }
        let col = if targets[j] == 1 { 0 } else { 1 };
        let p = s.data()[j * 2 + col];
        if p > floor {
            gd[j * 2 + col] = -g * coef[j] / p;
        }
    }
    gs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = t(&[3, 1], &[1.0, 2.0, 3.0]);
        let y = conv1d(&x, &t(&[1, 1, 1], &[1.0]), &t(&[1], &[0.0]), 1, 0).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn conv1d_zero_weights_give_zero() {
        let x = t(&[4, 2], &[1.0, -2.0, 3.0, 0.5, 2.0, 2.0, -1.0, 7.0]);
        let y = conv1d(&x, &Tensor::zeros(&[3, 2, 3]), &Tensor::zeros(&[3]), 1, 1).unwrap();
        assert_eq!(y.shape(), &[4, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv1d_strided_pair_sums() {
        let x = t(&[4, 1], &[1.0, 2.0, 3.0, 4.0]);
        let y = conv1d(&x, &t(&[2, 1, 1], &[1.0, 1.0]), &t(&[1], &[0.0]), 2, 0).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
    }

    #[test]
    fn conv1d_rejects_mismatched_channels() {
        let x = t(&[4, 2], &[0.0; 8]);
        assert!(matches!(
            conv1d(&x, &Tensor::zeros(&[3, 3, 1]), &Tensor::zeros(&[1]), 1, 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(conv1d(&x, &Tensor::zeros(&[5, 2, 1]), &Tensor::zeros(&[1]), 1, 0).is_err());
    }

    #[test]
    fn conv2d_identity_and_zero() {
        let x = t(&[2, 2, 1], &[1.0, 2.0, 3.0, 4.0]);
        let id = conv2d(&x, &t(&[1, 1, 1, 1], &[1.0]), &t(&[1], &[0.0]), (1, 1), (0, 0)).unwrap();
        assert_eq!(id, x);
        let z = conv2d(&x, &Tensor::zeros(&[1, 1, 1, 1]), &Tensor::zeros(&[1]), (1, 1), (0, 0)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv2d_box_sums() {
        let x = t(&[3, 3, 1], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let y = conv2d(&x, &Tensor::ones(&[2, 2, 1, 1]), &t(&[1], &[0.0]), (1, 1), (0, 0)).unwrap();
        // brute-force window sums
        let mut expect = Vec::new();
        for r in 0..2 {
            for c in 0..2 {
                let mut s = 0.0;
                for dr in 0..2 {
                    for dc in 0..2 {
                        s += x.data()[(r + dr) * 3 + c + dc];
                    }
                }
                expect.push(s);
            }
        }
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), expect.as_slice());
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn maxpool_examples() {
        let (y, _) = maxpool1d(&t(&[4], &[1.0, 3.0, 2.0, 4.0]), 2, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 4.0]);
        let (y, _) = maxpool1d(&t(&[6], &[5.0, 1.0, 2.0, 8.0, 7.0, 3.0]), 3, 3).unwrap();
        assert_eq!(y.data(), &[5.0, 8.0]);
        let (y, _) = maxpool1d(&Tensor::<f64>::full(&[6, 2], 1.5), 2, 2).unwrap();
        assert!(y.data().iter().all(|&v| v == 1.5));
        assert!(matches!(maxpool1d(&t(&[2], &[1.0, 2.0]), 3, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn maxpool_ties_route_to_first_index() {
        let x = t(&[4], &[2.0, 2.0, 1.0, 1.0]);
        let (_, arg) = maxpool1d(&x, 2, 2).unwrap();
        assert_eq!(arg, vec![0, 2]);
        let g = maxpool_backward(x.shape(), &arg, &t(&[2], &[1.0, 1.0]));
        assert_eq!(g.data(), &[1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn deconv1d_examples() {
        let y = deconv1d(&t(&[2, 1], &[1.0, 1.0]), &Tensor::ones(&[2, 1, 1]), &t(&[1], &[0.0]), 2).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0, 1.0, 1.0]);
        let x = t(&[3, 1], &[1.0, -2.0, 4.0]);
        let id = deconv1d(&x, &t(&[1, 1, 1], &[1.0]), &t(&[1], &[0.0]), 1).unwrap();
        assert_eq!(id, x);
        let z = deconv1d(&Tensor::<f64>::zeros(&[5, 2]), &Tensor::ones(&[4, 2, 3]), &Tensor::zeros(&[3]), 2).unwrap();
        assert_eq!(z.shape(), &[10, 3]);
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deconv1d_matches_transpose_matrix() {
        // y = Mᵀ x where M is the matrix of the conv1d that deconv1d transposes
        let (t_in, k, s) = (3usize, 4usize, 2usize);
        let x = t(&[t_in, 1], &[0.5, -1.0, 2.0]);
        let w = t(&[k, 1, 1], &[1.0, 2.0, 3.0, 4.0]);
        let y = deconv1d(&x, &w, &t(&[1], &[0.0]), s).unwrap();
        let crop = (k - s) / 2;
        let mut expect = vec![0.0; t_in * s];
        for (o, e) in expect.iter_mut().enumerate() {
            for ti in 0..t_in {
                for j in 0..k {
                    if ti * s + j == o + crop {
                        *e += x.data()[ti] * w.data()[j];
                    }
                }
            }
        }
        assert_eq!(y.data(), expect.as_slice());
    }

    #[test]
    fn dense_examples() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let y = dense(&x, &t(&[2, 2], &[1.0, 0.0, 1.0, 1.0]), &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 2.0]);
        let b = dense(&x, &Tensor::zeros(&[2, 3]), &t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        assert_eq!(b.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&t(&[2], &[0.0, 0.0])).data(), &[0.5, 0.5]);
        let y = softmax(&t(&[3], &[1.0, 2.0, 3.0]));
        let z: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| v.exp()).sum();
        for (i, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((y.data()[i] - v.exp() / z).abs() < 1e-15);
        }
        let big = softmax(&t(&[2, 2], &[1000.0, 999.0, -5.0, 5.0]));
        assert!(big.is_finite());
        assert!((big.data()[0] + big.data()[1] - 1.0).abs() < 1e-12);
        assert_eq!(relu(&t(&[1], &[-1.0])).data(), &[0.0]);
    }
}
