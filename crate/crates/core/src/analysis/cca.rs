//! Regularized canonical correlation analysis.
//!
//! Each auto-covariance gets a ridge of `ε · trace(C)/D` added to its
//! diagonal, is whitened through its symmetric eigendecomposition, and the
//! whitened cross-covariance is decomposed by SVD. Projection columns are
//! then rescaled so the training variates have unit (unregularized) sample
//! variance, and `ρ_k` is reported as the sample correlation of the k-th
//! variate pair on the training frames.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const MAX_COMPONENTS: usize = 8;

/// Minimum frames for a per-video score.
pub const MIN_SCORE_FRAMES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CcaModel {
    /// Audio projection `[D_a, K]`.
    pub a: DMatrix<f64>,
    /// Visual projection `[D_v, K]`.
    pub b: DMatrix<f64>,
    pub mean_a: DVector<f64>,
    pub mean_v: DVector<f64>,
    /// Canonical correlations, descending and non-negative.
    pub rho: Vec<f64>,
    pub epsilon: f64,
}

impl CcaModel {
    pub fn components(&self) -> usize {
        self.rho.len()
    }

    /// Audio and visual variates `[F, K]` for the given frames.
    pub fn transform(&self, xa: &DMatrix<f64>, xv: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        (centered(xa, &self.mean_a) * &self.a, centered(xv, &self.mean_v) * &self.b)
    }
}

pub fn to_matrix(t: &Tensor<f64>) -> Result<DMatrix<f64>> {
    let (r, c) = t.dims2()?;
    Ok(DMatrix::from_row_slice(r, c, t.data()))
}

fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let f = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / f))
}

fn centered(x: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    out
}

/// `(C + ridge·I)^{-1/2}` for a symmetric PSD `C`.
fn inverse_sqrt(c: &DMatrix<f64>, epsilon: f64, which: &str) -> Result<DMatrix<f64>> {
    let d = c.nrows();
    let ridge = epsilon * c.trace() / d as f64;
    let mut reg = c.clone();
    for i in 0..d {
        reg[(i, i)] += ridge;
    }
    let eig = SymmetricEigen::new(reg);
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = max * d as f64 * f64::EPSILON * 16.0;
    if !(max > 0.0) || min <= tol {
        return Err(Error::Numerical(format!(
            "{which} covariance is rank-deficient (eigenvalues {min:.3e}..{max:.3e}); use a ridge epsilon > 0"
        )));
    }
    let inv = DVector::from_iterator(d, eig.eigenvalues.iter().map(|l| 1.0 / l.sqrt()));
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose())
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    let (mut raw_a, mut raw_b) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
        raw_a += x * x;
        raw_b += y * y;
    }
    // variance lost in rounding counts as zero
    let floor = |raw: f64| 1e-24 * raw.max(f64::MIN_POSITIVE);
    if saa <= floor(raw_a) || sbb <= floor(raw_b) {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Fits `K = min(k, D_a, D_v)` canonical pairs on paired frames.
pub fn fit_cca(xa: &Tensor<f64>, xv: &Tensor<f64>, k: usize, epsilon: f64) -> Result<CcaModel> {
    let (xa, xv) = (to_matrix(xa)?, to_matrix(xv)?);
    fit_cca_matrix(&xa, &xv, k, epsilon)
}

pub fn fit_cca_matrix(xa: &DMatrix<f64>, xv: &DMatrix<f64>, k: usize, epsilon: f64) -> Result<CcaModel> {
    let f = xa.nrows();
    if xv.nrows() != f {
        return Err(Error::invalid(format!("cca: {f} audio frames vs {} visual frames", xv.nrows())));
    }
    if f < 2 {
        return Err(Error::invalid("cca needs at least 2 frames"));
    }
    if k == 0 {
        return Err(Error::invalid("cca needs at least one component"));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::invalid(format!("ridge epsilon must be >= 0, got {epsilon}")));
    }
    if xa.iter().chain(xv.iter()).any(|v| !v.is_finite()) {
        return Err(Error::invalid("cca input contains non-finite values"));
    }
    let k = k.min(xa.ncols()).min(xv.ncols());
    let (mean_a, mean_v) = (column_means(xa), column_means(xv));
    let (ca, cv) = (centered(xa, &mean_a), centered(xv, &mean_v));
    let scale = 1.0 / (f - 1) as f64;
    let caa = ca.transpose() * &ca * scale;
    let cvv = cv.transpose() * &cv * scale;
    let cav = ca.transpose() * &cv * scale;

    let wa = inverse_sqrt(&caa, epsilon, "audio")?;
    let wv = inverse_sqrt(&cvv, epsilon, "visual")?;
    let m = &wa * cav * &wv;
    let svd = m.svd(true, true);
    let (u, vt) = match (svd.u, svd.v_t) {
        (Some(u), Some(vt)) => (u, vt),
        _ => return Err(Error::Numerical("cca: SVD did not converge".into())),
    };
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));

    let mut a = DMatrix::zeros(xa.ncols(), k);
    let mut b = DMatrix::zeros(xv.ncols(), k);
    let mut rho = Vec::with_capacity(k);
    for (out, &i) in order.iter().take(k).enumerate() {
        let mut acol = &wa * u.column(i);
        let mut bcol = &wv * vt.row(i).transpose();
        let (arg, _) = acol.iter().enumerate().fold((0, 0.0f64), |best, (r, v)| {
            if v.abs() > best.1 {
                (r, v.abs())
            } else {
                best
            }
        });
        if acol[arg] < 0.0 {
            acol.neg_mut();
            bcol.neg_mut();
        }
        let za = &ca * &acol;
        let zv = &cv * &bcol;
        let sd_a = (za.norm_squared() * scale).sqrt();
        let sd_v = (zv.norm_squared() * scale).sqrt();
        if !(sd_a > 0.0 && sd_v > 0.0) {
            return Err(Error::Numerical(format!("cca: component {out} has zero variance")));
        }
        acol /= sd_a;
        bcol /= sd_v;
        let r = pearson(za.as_slice(), zv.as_slice())
            .ok_or_else(|| Error::Numerical(format!("cca: component {out} has zero variance")))?;
        if r < 0.0 {
            bcol.neg_mut();
        }
        a.set_column(out, &acol);
        b.set_column(out, &bcol);
        rho.push(r.abs());
    }

    // the empirical correlations can reorder slightly against the
    // regularized singular values
    let mut perm: Vec<usize> = (0..k).collect();
    perm.sort_by(|&i, &j| rho[j].total_cmp(&rho[i]));
    let a = DMatrix::from_columns(&perm.iter().map(|&i| a.column(i)).collect::<Vec<_>>());
    let b = DMatrix::from_columns(&perm.iter().map(|&i| b.column(i)).collect::<Vec<_>>());
    let rho = perm.iter().map(|&i| rho[i]).collect();
    Ok(CcaModel {
        a,
        b,
        mean_a,
        mean_v,
        rho,
        epsilon,
    })
}

/// Pearson correlation over a video's frames of the first canonical pair.
/// `Undefined` if either variate is constant.
pub fn video_score(model: &CcaModel, xa: &Tensor<f64>, xv: &Tensor<f64>) -> Result<f64> {
    let (xa, xv) = (to_matrix(xa)?, to_matrix(xv)?);
    video_score_matrix(model, &xa, &xv)
}

pub fn video_score_matrix(model: &CcaModel, xa: &DMatrix<f64>, xv: &DMatrix<f64>) -> Result<f64> {
    if xa.nrows() != xv.nrows() {
        return Err(Error::invalid("video_score: audio and visual frame counts differ"));
    }
    if xa.nrows() < MIN_SCORE_FRAMES {
        return Err(Error::invalid(format!(
            "video_score needs at least {MIN_SCORE_FRAMES} frames, got {}",
            xa.nrows()
        )));
    }
    if xa.ncols() != model.a.nrows() || xv.ncols() != model.b.nrows() {
        return Err(Error::invalid(format!(
            "video_score: features [{}, {}] do not match the fitted model [{}, {}]",
            xa.ncols(),
            xv.ncols(),
            model.a.nrows(),
            model.b.nrows()
        )));
    }
    let za = centered(xa, &model.mean_a) * model.a.column(0);
    let zv = centered(xv, &model.mean_v) * model.b.column(0);
    pearson(za.as_slice(), zv.as_slice())
        .ok_or_else(|| Error::Undefined("first canonical variate is constant over the video".into()))
}
