//! Pixel and defect-level scores, the hybrid training loss and evaluation
//! reports.

mod detection;
mod loss;
mod overlap;
mod report;

pub use detection::{detection_score, iou_matrix, DefectOutcome, DetectionScore, DEFAULT_MATCH_IOU};
pub use loss::{hybrid_loss, hybrid_loss_grad, BceForm, LossValues, EPS};
pub use overlap::{f_score, iou, iou_values, precision_recall};
pub use report::{evaluate, mean_std, EvalConfig, EvalReport, ImageScore};
