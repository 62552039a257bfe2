//! Per-video audio-visual correlation scores and the CCA+/CCA− split.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::analysis::cca::{fit_cca_matrix, video_score_matrix, CcaModel, MAX_COMPONENTS};
use crate::data::record::VideoRecord;
use crate::error::{Error, Result};
use crate::models::{prepare_input, UnimodalModel};
use crate::nn::Tensor;

pub const SPLIT_THRESHOLD: f64 = 0.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaSplit {
    pub threshold: f64,
    pub scores: BTreeMap<String, f64>,
    /// Ids with score > threshold, by descending score.
    pub cca_plus: Vec<String>,
    /// Ids with score ≤ threshold, by descending score.
    pub cca_minus: Vec<String>,
    /// Videos whose score is undefined.
    #[serde(default)]
    pub unsplittable: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CcaSplit {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn is_plus(&self, id: &str) -> bool {
        self.cca_plus.iter().any(|v| v == id)
    }

    pub fn is_minus(&self, id: &str) -> bool {
        self.cca_minus.iter().any(|v| v == id)
    }
}

/// Splits scored videos at zero; `unsplittable` ids are carried through.
pub fn split_by_cca(scores: &BTreeMap<String, f64>, unsplittable: Vec<String>) -> CcaSplit {
    let mut ranked: Vec<(&String, f64)> = scores.iter().map(|(k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let (plus, minus): (Vec<_>, Vec<_>) = ranked.into_iter().partition(|(_, s)| *s > SPLIT_THRESHOLD);
    CcaSplit {
        threshold: SPLIT_THRESHOLD,
        scores: scores.clone(),
        cca_plus: plus.into_iter().map(|(k, _)| k.clone()).collect(),
        cca_minus: minus.into_iter().map(|(k, _)| k.clone()).collect(),
        unsplittable,
        seed: None,
    }
}

/// Per-frame `(f_a, f_v)` pairs of one video, in f64. Audio features are the
/// window-averaged raw embeddings, or FCN-RD outputs of `audio_model`.
pub fn frame_features(
    video: &VideoRecord,
    audio_model: Option<&UnimodalModel<f32>>,
) -> Result<(Tensor<f64>, Tensor<f64>)> {
    let fa = match audio_model {
        None => video.mean_pooled_audio().cast(),
        Some(m) => m.audio_features(&prepare_input::<f32>(video, &m.config)?)?.cast(),
    };
    Ok((fa, video.visual.cast()))
}

fn stack(parts: &[Tensor<f64>]) -> nalgebra::DMatrix<f64> {
    let cols = parts[0].shape()[1];
    let rows: usize = parts.iter().map(|p| p.shape()[0]).sum();
    let data: Vec<f64> = parts.iter().flat_map(|p| p.data().iter().copied()).collect();
    nalgebra::DMatrix::from_row_slice(rows, cols, &data)
}

/// Fits one CCA on frames pooled over all videos, then scores and splits
/// every video.
pub fn cca_split_videos(
    videos: &[VideoRecord],
    epsilon: f64,
    audio_model: Option<&UnimodalModel<f32>>,
) -> Result<(CcaModel, CcaSplit)> {
    if videos.is_empty() {
        return Err(Error::invalid("no videos to split"));
    }
    let feats = videos
        .iter()
        .map(|v| frame_features(v, audio_model))
        .collect::<Result<Vec<_>>>()?;
    let (fa, fv): (Vec<_>, Vec<_>) = feats.into_iter().unzip();
    let xa = stack(&fa);
    let xv = stack(&fv);
    let k = MAX_COMPONENTS.min(xa.ncols()).min(xv.ncols());
    let model = fit_cca_matrix(&xa, &xv, k, epsilon)?;

    let mut scores = BTreeMap::new();
    let mut unsplittable = Vec::new();
    for ((v, a), x) in videos.iter().zip(&fa).zip(&fv) {
        let a = nalgebra::DMatrix::from_row_slice(a.shape()[0], a.shape()[1], a.data());
        let x = nalgebra::DMatrix::from_row_slice(x.shape()[0], x.shape()[1], x.data());
        match video_score_matrix(&model, &a, &x) {
            Ok(s) => {
                scores.insert(v.id.clone(), s);
            }
            Err(Error::Undefined(msg)) => {
                warn!("video {} is unsplittable: {msg}", v.id);
                unsplittable.push(v.id.clone());
            }
            Err(e) => return Err(e),
        }
    }
    Ok((model, split_by_cca(&scores, unsplittable)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::cca::DEFAULT_EPSILON;
    use crate::data::synth::{generate_synthetic, SynthConfig};
    use proptest::prelude::*;

    #[test]
    fn two_video_example() {
        let scores: BTreeMap<String, f64> = [("a".into(), 0.4), ("b".into(), -0.2)].into();
        let s = split_by_cca(&scores, vec![]);
        assert_eq!(s.cca_plus, ["a"]);
        assert_eq!(s.cca_minus, ["b"]);
    }

    #[test]
    fn all_positive_leaves_minus_empty() {
        let scores: BTreeMap<String, f64> = [("a".into(), 0.4), ("b".into(), 0.1)].into();
        let s = split_by_cca(&scores, vec![]);
        assert_eq!(s.cca_plus, ["a", "b"]);
        assert!(s.cca_minus.is_empty());
    }

    #[test]
    fn zero_score_goes_to_minus() {
        let scores: BTreeMap<String, f64> = [("a".into(), 0.0)].into();
        assert_eq!(split_by_cca(&scores, vec![]).cca_minus, ["a"]);
    }

    #[test]
    fn json_fields() {
        let scores: BTreeMap<String, f64> = [("a".into(), 0.4)].into();
        let v = serde_json::to_value(split_by_cca(&scores, vec![])).unwrap();
        for key in ["threshold", "scores", "cca_plus", "cca_minus"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn planted_signs_are_recovered() {
        let videos = generate_synthetic(&SynthConfig::balanced(12, 0.9, 3)).unwrap();
        let (_, split) = cca_split_videos(&videos, DEFAULT_EPSILON, None).unwrap();
        for v in &videos {
            let plus = v.planted_rho.unwrap() > 0.0;
            assert_eq!(split.is_plus(&v.id), plus, "{} score {}", v.id, split.scores[&v.id]);
        }
    }

    proptest! {
        #[test]
        fn split_is_a_partition(vals in prop::collection::vec(-1.0f64..1.0, 0..30)) {
            let scores: BTreeMap<String, f64> =
                vals.iter().enumerate().map(|(i, &v)| (format!("v{i}"), v)).collect();
            let s = split_by_cca(&scores, vec![]);
            prop_assert_eq!(s.cca_plus.len() + s.cca_minus.len(), scores.len());
            prop_assert!(s.cca_plus.iter().all(|id| scores[id] > 0.0));
            prop_assert!(s.cca_minus.iter().all(|id| scores[id] <= 0.0));
            prop_assert_eq!(&s, &split_by_cca(&scores, vec![]));
        }
    }
}
