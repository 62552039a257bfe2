//! Audio-visual correlation analysis, evaluation metrics and report tables.

pub mod cca;
pub mod metrics;
pub mod report;
pub mod split;

pub use cca::{fit_cca, video_score, CcaModel};
pub use metrics::{f1_score, kendall_tau, select_keyframes};
pub use report::{build_report, evaluate_prediction, EvalReport, Subset, VideoEval};
pub use split::{cca_split_videos, split_by_cca, CcaSplit};
