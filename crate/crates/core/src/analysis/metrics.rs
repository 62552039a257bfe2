//! Frame-level evaluation: key-frame selection, F1 and Kendall's τ-b.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::scalar::Scalar;

/// 1 where the key-frame probability strictly exceeds the other column.
pub fn select_keyframes<T: Scalar>(s: &Tensor<T>) -> Result<Vec<u8>> {
    let (n, c) = s.dims2()?;
    if c != 2 {
        return Err(Error::invalid(format!("expected [N, 2] scores, got {:?}", s.shape())));
    }
    Ok((0..n).map(|j| (s.at2(j, 0) > s.at2(j, 1)) as u8).collect())
}

fn check_lengths(a: usize, b: usize, mask: &[bool]) -> Result<()> {
    if a != b || a != mask.len() {
        return Err(Error::invalid(format!("length mismatch: {a}, {b} and mask {}", mask.len())));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

pub fn confusion(pred: &[u8], gt: &[u8], mask: &[bool]) -> Result<Confusion> {
    check_lengths(pred.len(), gt.len(), mask)?;
    let mut c = Confusion::default();
    for ((&p, &g), _) in pred.iter().zip(gt).zip(mask).filter(|(_, &m)| m) {
        match (p != 0, g != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Positive-class F1 over masked-in frames; 0 when precision or recall is
/// undefined or both are zero.
pub fn f1_score(pred: &[u8], gt: &[u8], mask: &[bool]) -> Result<f64> {
    let c = confusion(pred, gt, mask)?;
    if c.tp == 0 {
        return Ok(0.0);
    }
    let precision = c.tp as f64 / (c.tp + c.fp) as f64;
    let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Merge sort of `v` returning the number of inversions (pairs `i < j`
/// with `v[i] > v[j]`).
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Σ t(t−1)/2 over runs of equal values in a sorted sequence, where
/// `same(i)` tells whether item `i` equals item `i − 1`.
fn tied_pairs(n: usize, same: impl Fn(usize) -> bool) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for i in 1..n {
        if same(i) {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Kendall's τ-b over masked-in frames in `O(N log N)` (Knight's
/// algorithm). `Undefined` when either side is constant.
pub fn kendall_tau(x: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    check_lengths(x.len(), y.len(), mask)?;
    let mut pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&a, &b), _)| (a, b))
        .collect();
    if pairs.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
        return Err(Error::invalid("kendall tau of non-finite values"));
    }
    let n = pairs.len();
    if n < 2 {
        return Err(Error::Undefined(format!("kendall tau over {n} frames")));
    }
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(Ordering::Equal).then(p.1.total_cmp(&q.1)));
    let total = (n as u64) * (n as u64 - 1) / 2;
    let ties_x = tied_pairs(n, |i| pairs[i].0 == pairs[i - 1].0);
    let ties_xy = tied_pairs(n, |i| pairs[i] == pairs[i - 1]);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let discordant = count_inversions(&mut ys, &mut Vec::with_capacity(n));
    let ties_y = tied_pairs(n, |i| ys[i] == ys[i - 1]);
    let (nx, ny) = (total - ties_x, total - ties_y);
    if nx == 0 || ny == 0 {
        return Err(Error::Undefined("kendall tau with a constant ranking".into()));
    }
    // concordant − discordant over pairs untied in both
    let untied = total + ties_xy - ties_x - ties_y;
    let c_minus_d = untied as f64 - 2.0 * discordant as f64;
    Ok((c_minus_d / ((nx as f64).sqrt() * (ny as f64).sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    fn brute_tau(x: &[f64], y: &[f64]) -> Option<f64> {
        let (mut c, mut d, mut tx, mut ty) = (0i64, 0i64, 0i64, 0i64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let a = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let b = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                match (a == 0.0, b == 0.0) {
                    (true, true) => {}
                    (true, false) => tx += 1,
                    (false, true) => ty += 1,
                    (false, false) => {
                        if a == b {
                            c += 1
                        } else {
                            d += 1
                        }
                    }
                }
            }
        }
        let den = (((c + d + tx) * (c + d + ty)) as f64).sqrt();
        (den > 0.0).then(|| (c - d) as f64 / den)
    }

    #[test]
    fn heavily_tied_rankings() {
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 0.0];
        let tau = kendall_tau(&x, &y, &all(6)).unwrap();
        assert!((tau - brute_tau(&x, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn keyframe_examples() {
        let s = Tensor::<f64>::from_f64(&[2, 2], &[0.7, 0.3, 0.5, 0.5]).unwrap();
        assert_eq!(select_keyframes(&s).unwrap(), vec![1, 0]);
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1], &all(3)).unwrap(), 1.0);
        assert_eq!(f1_score(&[1, 0, 0], &[0, 1, 0], &all(3)).unwrap(), 0.0);
        assert_eq!(f1_score(&[0, 0], &[0, 0], &all(2)).unwrap(), 0.0);
        // TP 2, FP 1, FN 1
        let f = f1_score(&[1, 1, 1, 0], &[1, 1, 0, 1], &all(4)).unwrap();
        assert!((f - 2.0 / 3.0).abs() < 1e-15);
        // masked frames do not count
        assert_eq!(f1_score(&[1, 1], &[1, 0], &[true, false]).unwrap(), 1.0);
    }

    #[test]
    fn tau_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((kendall_tau(&x, &x, &all(4)).unwrap() - 1.0).abs() < 1e-15);
        assert!((kendall_tau(&x, &[4.0, 3.0, 2.0, 1.0], &all(4)).unwrap() + 1.0).abs() < 1e-15);
        let a = [1.0, 2.0, 2.0, 3.0];
        let b = [1.0, 3.0, 2.0, 2.0];
        let t = kendall_tau(&a, &b, &all(4)).unwrap();
        assert!((t - brute_tau(&a, &b).unwrap()).abs() < 1e-12);
        assert!((t - 0.4).abs() < 1e-12);
        assert!(matches!(kendall_tau(&[1.0; 4], &x, &all(4)), Err(Error::Undefined(_))));
    }

    fn tied_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0u8..6, n).prop_map(|v| v.into_iter().map(|k| k as f64 * 0.5).collect())
    }

    proptest! {
        #[test]
        fn tau_matches_pair_counting((x, y) in (2usize..64).prop_flat_map(|n| (tied_values(n), tied_values(n)))) {
            let fast = kendall_tau(&x, &y, &all(x.len())).ok();
            let slow = brute_tau(&x, &y);
            match (fast, slow) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "{:?}", other),
            }
        }

        #[test]
        fn keyframes_ignore_logit_shift(logits in prop::collection::vec(-5.0f64..5.0, 2..40), shift in -50.0f64..50.0) {
            let n = logits.len() / 2;
            prop_assume!(n >= 1);
            let l = Tensor::<f64>::from_f64(&[n, 2], &logits[..2 * n]).unwrap();
            let shifted = l.map(|v| v + shift);
            let a = select_keyframes(&crate::nn::ops::softmax(&l)).unwrap();
            let b = select_keyframes(&crate::nn::ops::softmax(&shifted)).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
