//! Subset-conditioned result tables (All / CCA− / CCA+ per model).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::analysis::metrics::{f1_score, kendall_tau, select_keyframes};
use crate::analysis::split::CcaSplit;
use crate::data::record::VideoRecord;
use crate::error::{Error, Result};
use crate::models::ModelVariant;
use crate::training::Prediction;

pub const TSV_HEADER: &str = "model\tsubset\tf1_percent\tkendall_tau\tn_videos";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Subset {
    #[serde(rename = "All")]
    All,
    #[serde(rename = "CCA-")]
    CcaMinus,
    #[serde(rename = "CCA+")]
    CcaPlus,
}

impl Subset {
    pub const ALL: [Subset; 3] = [Subset::All, Subset::CcaMinus, Subset::CcaPlus];

    pub fn label(self) -> &'static str {
        match self {
            Subset::All => "All",
            Subset::CcaMinus => "CCA-",
            Subset::CcaPlus => "CCA+",
        }
    }

    fn contains(self, split: &CcaSplit, id: &str) -> bool {
        match self {
            Subset::All => true,
            Subset::CcaMinus => split.is_minus(id),
            Subset::CcaPlus => split.is_plus(id),
        }
    }
}

/// Metrics of one test video under one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VideoEval {
    pub model: ModelVariant,
    pub video_id: String,
    /// Fold in which the video was a test video.
    pub fold: usize,
    pub f1: f64,
    /// `None` when τ is undefined (constant ranking).
    pub tau: Option<f64>,
}

pub fn evaluate_prediction(
    model: ModelVariant,
    fold: usize,
    prediction: &Prediction,
    video: &VideoRecord,
) -> Result<VideoEval> {
    let n = video.frames();
    if prediction.id != video.id || prediction.scores.shape() != [n, 2] {
        return Err(Error::invalid(format!(
            "prediction for {} {:?} does not match video {} with {n} frames",
            prediction.id,
            prediction.scores.shape(),
            video.id
        )));
    }
    let mask = vec![true; n];
    let keyframes = select_keyframes(&prediction.scores)?;
    let f1 = f1_score(&keyframes, &video.labels, &mask)?;
    let positive: Vec<f64> = (0..n).map(|j| prediction.scores.at2(j, 0)).collect();
    let tau = match kendall_tau(&positive, &video.importance, &mask) {
        Ok(t) => Some(t),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(VideoEval {
        model,
        video_id: video.id.clone(),
        fold,
        f1,
        tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportCell {
    pub model: ModelVariant,
    pub subset: Subset,
    /// Mean F1 × 100 over the subset's videos.
    pub f1_percent: Option<f64>,
    /// Mean τ over videos where it is defined.
    pub kendall_tau: Option<f64>,
    pub n_videos: usize,
    /// Folds contributing to this cell, ascending.
    pub folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub cells: Vec<ReportCell>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut total, mut count) = (0.0, 0usize);
    for v in values {
        total += v;
        count += 1;
    }
    (count > 0).then(|| total / count as f64)
}

pub fn build_report(evals: &[VideoEval], split: &CcaSplit) -> EvalReport {
    let mut cells = Vec::new();
    for model in ModelVariant::ALL {
        let rows: Vec<&VideoEval> = evals.iter().filter(|e| e.model == model).collect();
        if rows.is_empty() {
            continue;
        }
        for subset in Subset::ALL {
            let member: Vec<&&VideoEval> = rows.iter().filter(|e| subset.contains(split, &e.video_id)).collect();
            let mut folds: Vec<usize> = member.iter().map(|e| e.fold).collect();
            folds.sort_unstable();
            folds.dedup();
            cells.push(ReportCell {
                model,
                subset,
                f1_percent: mean(member.iter().map(|e| 100.0 * e.f1)),
                kendall_tau: mean(member.iter().filter_map(|e| e.tau)),
                n_videos: member.len(),
                folds,
            });
        }
    }
    EvalReport { cells }
}

impl EvalReport {
    pub fn cell(&self, model: ModelVariant, subset: Subset) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.model == model && c.subset == subset)
    }

    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                c.model.label(),
                c.subset.label(),
                fmt(c.f1_percent),
                fmt(c.kendall_tau),
                c.n_videos
            );
        }
        out
    }

    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::split::split_by_cca;
    use crate::nn::Tensor;
    use std::collections::BTreeMap;

    fn ev(model: ModelVariant, id: &str, fold: usize, f1: f64, tau: Option<f64>) -> VideoEval {
        VideoEval {
            model,
            video_id: id.into(),
            fold,
            f1,
            tau,
        }
    }

    fn split() -> CcaSplit {
        let scores: BTreeMap<String, f64> =
            [("a".into(), 0.5), ("b".into(), -0.3), ("c".into(), 0.2)].into();
        split_by_cca(&scores, vec![])
    }

    #[test]
    fn single_video_all_cell() {
        let r = build_report(&[ev(ModelVariant::Visual, "a", 0, 0.8, Some(0.1))], &split());
        let c = r.cell(ModelVariant::Visual, Subset::All).unwrap();
        assert_eq!(c.f1_percent, Some(80.0));
        assert_eq!(c.kendall_tau, Some(0.1));
        assert_eq!(c.n_videos, 1);
        let minus = r.cell(ModelVariant::Visual, Subset::CcaMinus).unwrap();
        assert_eq!(minus.n_videos, 0);
        assert!(r.to_tsv().contains("V\tCCA-\tNA\tNA\t0"));
    }

    #[test]
    fn subsets_average_to_all() {
        let evals = [
            ev(ModelVariant::AvGru, "a", 0, 0.9, Some(0.3)),
            ev(ModelVariant::AvGru, "b", 1, 0.4, None),
            ev(ModelVariant::AvGru, "c", 2, 0.7, Some(0.1)),
        ];
        let r = build_report(&evals, &split());
        let get = |s| r.cell(ModelVariant::AvGru, s).unwrap().clone();
        let (all, plus, minus) = (get(Subset::All), get(Subset::CcaPlus), get(Subset::CcaMinus));
        let weighted = (plus.f1_percent.unwrap() * plus.n_videos as f64
            + minus.f1_percent.unwrap() * minus.n_videos as f64)
            / (plus.n_videos + minus.n_videos) as f64;
        assert!((weighted - all.f1_percent.unwrap()).abs() < 1e-12);
        assert_eq!(minus.kendall_tau, None);
        assert_eq!(all.folds, vec![0, 1, 2]);
    }

    #[test]
    fn tsv_layout() {
        let r = build_report(&[ev(ModelVariant::AvAtt, "a", 0, 0.5, Some(-0.25))], &split());
        let tsv = r.to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines[0], "model\tsubset\tf1_percent\tkendall_tau\tn_videos");
        assert_eq!(lines[1], "AV_ATT\tAll\t50.0000\t-0.2500\t1");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn evaluation_of_a_prediction() {
        let mut video = crate::data::record::tests::toy_record(8, 2, 2);
        video.labels = vec![1, 0, 0, 1, 0, 0, 0, 0];
        let scores = Tensor::from_fn(&[8, 2], |i| {
            let (t, c) = (i / 2, i % 2);
            let p = if video.labels[t] == 1 { 0.9 } else { 0.2 };
            if c == 0 {
                p
            } else {
                1.0 - p
            }
        });
        let pred = Prediction {
            id: video.id.clone(),
            scores,
        };
        let e = evaluate_prediction(ModelVariant::Visual, 3, &pred, &video).unwrap();
        assert_eq!(e.f1, 1.0);
        assert_eq!(e.fold, 3);
        assert!(e.tau.is_some());
    }
}
