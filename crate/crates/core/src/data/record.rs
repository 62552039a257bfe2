use crate::error::{Error, Result};
use crate::nn::Tensor;

/// Minimum number of frames per video.
pub const MIN_FRAMES: usize = 8;

/// One video's features and annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    /// Visual features `[N, D]`.
    pub visual: Tensor<f32>,
    /// Raw audio embeddings `[N, M, D]`, one `M×D` window per frame.
    pub audio: Tensor<f32>,
    /// Ground-truth key-frame labels in {0, 1}.
    pub labels: Vec<u8>,
    /// Graded per-frame importance, used for rank correlation.
    pub importance: Vec<f64>,
    /// Audio-visual latent correlation planted by the synthetic generator.
    pub planted_rho: Option<f64>,
}

impl VideoRecord {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.visual.shape()[1]
    }

    pub fn audio_window(&self) -> usize {
        self.audio.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        let bad = |msg: String| Err(Error::invalid(format!("video {}: {msg}", self.id)));
        if n < MIN_FRAMES {
            return bad(format!("{n} frames, need at least {MIN_FRAMES}"));
        }
        let (vn, d) = self.visual.dims2()?;
        if vn != n {
            return bad(format!("visual features have {vn} frames, labels have {n}"));
        }
        match self.audio.shape() {
            [an, _, ad] if *an == n && *ad == d => {}
            s => return bad(format!("audio embeddings {s:?} do not match [{n}, M, {d}]")),
        }
        if self.importance.len() != n {
            return bad(format!("{} importance values for {n} frames", self.importance.len()));
        }
        if self.labels.iter().any(|&z| z > 1) {
            return bad("labels must be 0 or 1".into());
        }
        if self.importance.iter().any(|v| !v.is_finite()) {
            return bad("importance must be finite".into());
        }
        Ok(())
    }

    /// Audio embeddings averaged over the window axis → `[N, D]`.
    pub fn mean_pooled_audio(&self) -> Tensor<f32> {
        let (n, m, d) = (self.audio.shape()[0], self.audio.shape()[1], self.audio.shape()[2]);
        let a = self.audio.data();
        let mut out = vec![0.0f32; n * d];
        for t in 0..n {
            let row = &mut out[t * d..(t + 1) * d];
            for w in 0..m {
                let src = &a[(t * m + w) * d..(t * m + w + 1) * d];
                for (o, &v) in row.iter_mut().zip(src) {
                    *o += v;
                }
            }
            for o in row.iter_mut() {
                *o /= m as f32;
            }
        }
        Tensor::new(vec![n, d], out).expect("shape")
    }
}

/// A video zero-padded at the tail, with a mask marking real frames.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedVideo {
    pub record: VideoRecord,
    pub mask: Vec<bool>,
}

impl PaddedVideo {
    pub fn real_frames(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn pad_rows(t: &Tensor<f32>, rows: usize) -> Tensor<f32> {
    let n = t.shape()[0];
    if rows == n {
        return t.clone();
    }
    let row_len = t.len() / n;
    let mut data = t.data().to_vec();
    data.resize(rows * row_len, 0.0);
    let mut shape = t.shape().to_vec();
    shape[0] = rows;
    Tensor::new(shape, data).expect("shape")
}

/// Pads the frame axis up to the next multiple of `factor`.
pub fn pad_to_multiple(record: &VideoRecord, factor: usize) -> Result<PaddedVideo> {
    if factor == 0 {
        return Err(Error::invalid("padding factor must be >= 1"));
    }
    let n = record.frames();
    let padded = n.div_ceil(factor) * factor;
    let mut out = record.clone();
    out.visual = pad_rows(&record.visual, padded);
    out.audio = pad_rows(&record.audio, padded);
    out.labels.resize(padded, 0);
    out.importance.resize(padded, 0.0);
    let mut mask = vec![true; n];
    mask.resize(padded, false);
    Ok(PaddedVideo { record: out, mask })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn toy_record(n: usize, d: usize, m: usize) -> VideoRecord {
        VideoRecord {
            id: format!("toy{n}"),
            visual: Tensor::from_fn(&[n, d], |i| (i % 7) as f32 * 0.1),
            audio: Tensor::from_fn(&[n, m, d], |i| (i % 5) as f32 * 0.2),
            labels: (0..n).map(|i| (i % 3 == 0) as u8).collect(),
            importance: (0..n).map(|i| i as f64).collect(),
            planted_rho: None,
        }
    }

    #[test]
    fn pads_ten_frames_to_twelve() {
        let p = pad_to_multiple(&toy_record(10, 3, 2), 4).unwrap();
        assert_eq!(p.record.frames(), 12);
        assert_eq!(p.record.visual.shape(), &[12, 3]);
        assert_eq!(p.record.audio.shape(), &[12, 2, 3]);
        assert_eq!(p.real_frames(), 10);
        assert!(p.record.visual.data()[30..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divisible_length_is_unchanged() {
        let r = toy_record(12, 3, 2);
        let p = pad_to_multiple(&r, 4).unwrap();
        assert_eq!(p.record, r);
        assert!(p.mask.iter().all(|&m| m));
    }

    #[test]
    fn validate_catches_mismatch() {
        let mut r = toy_record(12, 3, 2);
        assert!(r.validate().is_ok());
        r.labels[0] = 2;
        assert!(r.validate().is_err());
        let mut r = toy_record(12, 3, 2);
        r.importance.pop();
        assert!(r.validate().is_err());
        assert!(toy_record(6, 3, 2).validate().is_err());
    }

    #[test]
    fn mean_pool_averages_window() {
        let mut r = toy_record(8, 2, 2);
        r.audio = Tensor::from_fn(&[8, 2, 2], |i| i as f32);
        let p = r.mean_pooled_audio();
        assert_eq!(p.shape(), &[8, 2]);
        assert_eq!(&p.data()[..2], &[1.0, 2.0]);
    }
}
