//! JSON request and response bodies.

use serde::{Deserialize, Serialize};
use thermoseg_core::mask::{Mask, PixelRect};

#[derive(Debug, Serialize)]
pub struct SequenceSummary {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub frames: usize,
    pub frame_rate: f64,
    pub source: String,
    pub system_tag: String,
    pub sample_tag: String,
    pub ambient: f64,
    pub has_ground_truth: bool,
    /// Enhancement method for derived stacks.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    pub annotators: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Curve {
    pub row: usize,
    pub col: usize,
    pub frame_rate: f64,
    pub raw: Vec<f64>,
    /// Residual-heat-corrected values of frames `first_corrected_frame..`;
    /// absent when the sequence is too short for the correction.
    pub corrected: Option<Vec<f64>>,
    pub first_corrected_frame: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBody {
    pub id: String,
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

impl PromptBody {
    pub fn rect(&self) -> PixelRect {
        PixelRect { row0: self.row0, col0: self.col0, row1: self.row1, col1: self.col1 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub prompts: Vec<PromptBody>,
    /// Segment on the contrast map of this frame.
    pub frame: Option<usize>,
    /// Apply residual-heat correction before taking `frame`.
    #[serde(default)]
    pub corrected: bool,
    /// `peak` (per-prompt peak frame, the default) or an enhancement method
    /// whose stored stack `<id>.<method>` supplies the surface.
    pub method: Option<String>,
    /// Image index within the enhanced stack.
    pub image: Option<usize>,
    pub margin: Option<f64>,
    pub threshold: Option<f64>,
}

/// A mask as row runs `[row, first col, last col]`, inclusive.
pub type Runs = Vec<[usize; 3]>;

pub fn mask_to_runs(mask: &Mask) -> Runs {
    let mut runs = Vec::new();
    for r in 0..mask.rows() {
        let mut c = 0;
        while c < mask.cols() {
            if mask.get(r, c) {
                let start = c;
                while c + 1 < mask.cols() && mask.get(r, c + 1) {
                    c += 1;
                }
                runs.push([r, start, c]);
            }
            c += 1;
        }
    }
    runs
}

/// Inverse of [`mask_to_runs`]; `Err` names the first bad run.
pub fn runs_to_mask(runs: &Runs, rows: usize, cols: usize) -> Result<Mask, (usize, String)> {
    let mut m = Mask::empty(rows, cols);
    for (i, &[r, c0, c1]) in runs.iter().enumerate() {
        if r >= rows || c0 > c1 || c1 >= cols {
            return Err((i, format!("run [{r}, {c0}, {c1}] is outside a {rows}×{cols} image")));
        }
        for c in c0..=c1 {
            m.set(r, c, true);
        }
    }
    Ok(m)
}

#[derive(Debug, Serialize)]
pub struct PromptOutcome {
    pub id: String,
    pub status: String,
    pub confidence: f64,
    pub threshold: Option<f64>,
    pub seed: [usize; 2],
    pub expanded: PromptBody,
    pub pixels: usize,
    pub runs: Runs,
}

#[derive(Debug, Serialize)]
pub struct SegmentResponse {
    pub sequence_id: String,
    pub surface: String,
    pub margin: f64,
    pub threshold_override: Option<f64>,
    pub prompts: Vec<PromptOutcome>,
    pub semantic: Runs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub sequence_id: String,
    pub annotator: String,
    #[serde(default)]
    pub prompts: Vec<PromptBody>,
    pub mask: Runs,
}

/// Sidecar stored next to an accepted annotation mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sequence_id: String,
    pub annotator: String,
    pub prompts: Vec<PromptBody>,
    /// Mask file, relative to the store root.
    pub mask: String,
    pub pixels: usize,
    /// Seconds since the Unix epoch of the first acceptance of this content.
    pub timestamp: u64,
}

#[derive(Debug, Serialize)]
pub struct AnnotationResponse {
    pub record: AnnotationRecord,
    /// False when an identical annotation was already stored.
    pub changed: bool,
    /// Annotators now stored for the sequence.
    pub annotators: Vec<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRequest {
    /// Explicit sequence ids.
    pub ids: Option<Vec<String>>,
    /// A split plan (`id<TAB>split<TAB>fold` lines) selecting the ids.
    pub plan: Option<String>,
    /// `train`, `val` or `test` of `plan`.
    pub split: Option<String>,
    /// Fold of `plan`.
    pub fold: Option<usize>,
    pub gamma: Option<f64>,
    pub match_iou: Option<f64>,
    pub dilation: Option<f64>,
    pub margin: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct ImageRow {
    pub id: String,
    pub fold: Option<usize>,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub defects: usize,
    pub matched: usize,
    pub spurious: usize,
}

#[derive(Debug, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Serialize)]
pub struct EvalResponse {
    pub gamma: f64,
    pub match_iou: f64,
    pub images: Vec<ImageRow>,
    pub iou: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f_score: MeanStd,
    pub defect_recall: f64,
    pub mean_defect_iou: f64,
    pub csv: String,
    pub defects_csv: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    /// Scene description in the key = value format.
    pub scene: String,
    /// Overrides the scene's id.
    pub id: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct JobStatus {
    pub id: u64,
    /// `queued`, `running`, `done` or `failed`.
    pub state: &'static str,
    pub sequence_id: Option<String>,
    pub error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn runs_round_trip() {
        let m = Mask::from_fn(4, 6, |(r, c)| (r + c) % 3 != 0 && c > 0);
        let runs = mask_to_runs(&m);
        assert_eq!(runs_to_mask(&runs, 4, 6).unwrap(), m);
        assert!(runs_to_mask(&vec![[0, 2, 6]], 4, 6).is_err());
    }
}
