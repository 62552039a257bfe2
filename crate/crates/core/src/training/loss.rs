//! Class-weighted binary cross-entropy over two-column score sequences.
//!
//! ```text
//! w0 = mean(z),  w1 = 1 − w0
//! L  = −(1/N) Σ_j w_{z_j} · (z_j·log s_j[0] + (1 − z_j)·log s_j[1])
//! ```
//!
//! Column 0 is the key-frame probability. Since key frames are usually the
//! minority, `w1 = 1 − mean(z)` gives them the larger weight.

use crate::error::{Error, Result};
use crate::nn::{Tape, Tensor, Var};
use crate::scalar::Scalar;

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

/// Allowed deviation of a score row from summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub w0: f64,
    pub w1: f64,
}

impl ClassWeights {
    pub fn for_label(&self, z: u8) -> f64 {
        if z == 1 {
            self.w1
        } else {
            self.w0
        }
    }
}

pub fn class_weights(z: &[u8]) -> Result<ClassWeights> {
    if z.is_empty() {
        return Err(Error::invalid("class weights of an empty label sequence"));
    }
    if z.iter().any(|&v| v > 1) {
        return Err(Error::invalid("labels must be 0 or 1"));
    }
    let w0 = z.iter().map(|&v| v as f64).sum::<f64>() / z.len() as f64;
    Ok(ClassWeights { w0, w1: 1.0 - w0 })
}

/// Class weights over the masked-in frames only.
pub fn masked_class_weights(z: &[u8], mask: &[bool]) -> Result<ClassWeights> {
    let real: Vec<u8> = z.iter().zip(mask).filter(|(_, &m)| m).map(|(&v, _)| v).collect();
    class_weights(&real)
}

/// Per-frame coefficients `w_{z_j} / N`, zero on masked-out frames.
fn coefficients<T: Scalar>(z: &[u8], w: ClassWeights, mask: &[bool]) -> Result<Vec<T>> {
    if z.len() != mask.len() {
        return Err(Error::invalid(format!("{} labels but {} mask entries", z.len(), mask.len())));
    }
    let n = mask.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::invalid("loss over zero unmasked frames"));
    }
    let n = n as f64;
    Ok(z.iter()
        .zip(mask)
        .map(|(&zj, &m)| if m { T::lit(w.for_label(zj) / n) } else { T::zero() })
        .collect())
}

fn check_rows<T: Scalar>(s: &Tensor<T>, mask: &[bool]) -> Result<()> {
    let (n, c) = s.dims2()?;
    if c != 2 || n != mask.len() {
        return Err(Error::invalid(format!("scores {:?} for {} frames", s.shape(), mask.len())));
    }
    for j in (0..n).filter(|&j| mask[j]) {
        let row = s.row(j);
        let total = (row[0] + row[1]).as_f64();
        if (total - 1.0).abs() > ROW_SUM_TOLERANCE || row[0] < T::zero() || row[1] < T::zero() {
            return Err(Error::invalid(format!(
                "score row {j} = [{}, {}] is not a probability pair",
                row[0], row[1]
            )));
        }
    }
    Ok(())
}

/// Loss value for fixed scores.
pub fn weighted_bce<T: Scalar>(s: &Tensor<T>, z: &[u8], w: ClassWeights, mask: &[bool]) -> Result<T> {
    check_rows(s, mask)?;
    let coef = coefficients::<T>(z, w, mask)?;
    crate::nn::ops::weighted_pair_nll(s, z, &coef, T::lit(LOG_FLOOR))
}

/// Differentiable loss node on `tape`.
pub fn weighted_bce_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    s: Var,
    z: &[u8],
    w: ClassWeights,
    mask: &[bool],
) -> Result<Var> {
    check_rows(tape.value(s), mask)?;
    let coef = coefficients::<T>(z, w, mask)?;
    tape.pair_nll(s, z.to_vec(), coef, T::lit(LOG_FLOOR))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(rows: &[[f64; 2]]) -> Tensor<f64> {
        Tensor::from_f64(&[rows.len(), 2], &rows.concat()).unwrap()
    }

    #[test]
    fn weight_examples() {
        assert_eq!(class_weights(&[1, 1, 0, 0]).unwrap(), ClassWeights { w0: 0.5, w1: 0.5 });
        assert_eq!(class_weights(&[1, 0, 0, 0]).unwrap(), ClassWeights { w0: 0.25, w1: 0.75 });
        assert_eq!(class_weights(&[1, 1, 1]).unwrap(), ClassWeights { w0: 1.0, w1: 0.0 });
        assert!(matches!(class_weights(&[]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn perfect_predictions_cost_nothing() {
        let w = ClassWeights { w0: 0.5, w1: 0.5 };
        assert!(weighted_bce(&pair(&[[1.0, 0.0]]), &[1], w, &[true]).unwrap() <= 1e-11);
        assert!(weighted_bce(&pair(&[[0.0, 1.0]]), &[0], w, &[true]).unwrap() <= 1e-11);
    }

    #[test]
    fn half_half_positive() {
        let w = ClassWeights { w0: 0.5, w1: 0.5 };
        let l = weighted_bce(&pair(&[[0.5, 0.5]]), &[1], w, &[true]).unwrap();
        assert!((l - 0.346_573_590_279_972_6).abs() < 1e-12);
    }

    #[test]
    fn non_probability_rows_are_rejected() {
        let w = ClassWeights { w0: 0.5, w1: 0.5 };
        assert!(matches!(
            weighted_bce(&pair(&[[0.7, 0.7]]), &[1], w, &[true]),
            Err(Error::InvalidArgument(_))
        ));
    }

    fn instance() -> impl Strategy<Value = (Vec<u8>, Vec<f64>)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0u8..2, n),
                prop::collection::vec(0.0f64..=1.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn weights_close_to_one((z, _) in instance()) {
            let w = class_weights(&z).unwrap();
            prop_assert_eq!(w.w0 + w.w1, 1.0);
            prop_assert!((0.0..=1.0).contains(&w.w0) && (0.0..=1.0).contains(&w.w1));
        }

        #[test]
        fn loss_is_non_negative_and_padding_is_inert((z, p) in instance(), pad in 1usize..8) {
            let rows: Vec<[f64; 2]> = p.iter().map(|&q| [q, 1.0 - q]).collect();
            let w = class_weights(&z).unwrap();
            let mask = vec![true; z.len()];
            let l = weighted_bce(&pair(&rows), &z, w, &mask).unwrap();
            prop_assert!(l >= 0.0);

            let mut rows_p = rows.clone();
            let mut z_p = z.clone();
            let mut mask_p = mask.clone();
            for k in 0..pad {
                rows_p.push([0.3, 0.7]);
                z_p.push((k % 2) as u8);
                mask_p.push(false);
            }
            let lp = weighted_bce(&pair(&rows_p), &z_p, w, &mask_p).unwrap();
            prop_assert_eq!(l.to_bits(), lp.to_bits());
        }
    }
}
