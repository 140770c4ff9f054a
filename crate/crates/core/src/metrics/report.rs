use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::detection::{detection_score, DefectOutcome, DetectionScore, DEFAULT_MATCH_IOU};
use super::overlap::{f_score, iou, precision_recall};
use crate::error::{Error, Result};
use crate::mask::{union_all, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub gamma: f64,
    pub match_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { gamma: 2.0, match_iou: DEFAULT_MATCH_IOU }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageScore {
    pub id: String,
    pub fold: Option<usize>,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub detection: DetectionScore,
}

impl ImageScore {
    /// Scores one image. Pixel metrics compare the unions of the instance
    /// lists; defect metrics match instances one-to-one.
    pub fn compute(
        id: &str,
        fold: Option<usize>,
        truth: &[Mask],
        predicted: &[Mask],
        shape: (usize, usize),
        cfg: &EvalConfig,
    ) -> Result<Self> {
        let empty = Mask::empty(shape.0, shape.1);
        let y = union_all(truth)?.unwrap_or_else(|| empty.clone());
        let yhat = union_all(predicted)?.unwrap_or(empty);
        let (precision, recall) = precision_recall(&y, &yhat)?;
        Ok(ImageScore {
            id: id.to_string(),
            fold,
            iou: iou(&y, &yhat)?,
            precision,
            recall,
            f_score: f_score(precision, recall, cfg.gamma)?,
            detection: detection_score(truth, predicted, cfg.match_iou)?,
        })
    }

    /// IOU per ground-truth defect, 0 for a missed one.
    pub fn defect_ious(&self) -> Vec<f64> {
        self.detection
            .outcomes
            .iter()
            .map(|o| match o {
                DefectOutcome::Matched { iou, .. } => *iou,
                DefectOutcome::Missed => 0.0,
            })
            .collect()
    }
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub config: EvalConfig,
    pub images: Vec<ImageScore>,
}

const METRICS: [&str; 4] = ["iou", "precision", "recall", "f_score"];

impl EvalReport {
    pub fn new(config: EvalConfig, mut images: Vec<ImageScore>) -> Result<Self> {
        images.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = images.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::config(format!("image {} scored twice", w[0].id)));
        }
        Ok(EvalReport { config, images })
    }

    fn column(&self, metric: &str) -> Vec<f64> {
        self.images
            .iter()
            .map(|s| match metric {
                "iou" => s.iou,
                "precision" => s.precision,
                "recall" => s.recall,
                _ => s.f_score,
            })
            .collect()
    }

    /// Mean and spread of a pixel metric over images.
    pub fn over_images(&self, metric: &str) -> (f64, f64) {
        mean_std(&self.column(metric))
    }

    /// Per-fold means, then mean and spread over folds. `None` when no image
    /// carries a fold.
    pub fn over_folds(&self, metric: &str) -> Option<(f64, f64)> {
        let mut folds: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (s, v) in self.images.iter().zip(self.column(metric)) {
            if let Some(f) = s.fold {
                folds.entry(f).or_default().push(v);
            }
        }
        if folds.is_empty() {
            return None;
        }
        let means: Vec<f64> = folds.values().map(|v| mean_std(v).0).collect();
        Some(mean_std(&means))
    }

    pub fn defect_count(&self) -> usize {
        self.images.iter().map(|s| s.detection.outcomes.len()).sum()
    }

    pub fn defects_matched(&self) -> usize {
        self.images.iter().map(|s| s.detection.matched()).sum()
    }

    pub fn spurious_count(&self) -> usize {
        self.images.iter().map(|s| s.detection.spurious.len()).sum()
    }

    /// Fraction of ground-truth defects matched over the whole set.
    pub fn defect_recall(&self) -> f64 {
        super::overlap::ratio_or_one(self.defects_matched(), self.defect_count())
    }

    pub fn mean_defect_iou(&self) -> f64 {
        let all: Vec<f64> = self.images.iter().flat_map(|s| s.defect_ious()).collect();
        mean_std(&all).0
    }

    /// Per-image rows followed by a summary block. Numbers use six decimals
    /// so identical inputs give identical bytes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,iou,precision,recall,f2\n");
        for s in &self.images {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.6},{:.6}",
                s.id, s.iou, s.precision, s.recall, s.f_score
            );
        }
        out.push_str("\nmetric,mean,std,fold_mean,fold_std\n");
        for m in METRICS {
            let (mean, std) = self.over_images(m);
            let name = if m == "f_score" { "f2" } else { m };
            match self.over_folds(m) {
                Some((fm, fs)) => {
                    let _ = writeln!(out, "{name},{mean:.6},{std:.6},{fm:.6},{fs:.6}");
                }
                None => {
                    let _ = writeln!(out, "{name},{mean:.6},{std:.6},,");
                }
            }
        }
        let _ = writeln!(out, "defect_recall,{:.6},,,", self.defect_recall());
        let _ = writeln!(out, "mean_defect_iou,{:.6},,,", self.mean_defect_iou());
        let _ = writeln!(out, "defects,{},,,", self.defect_count());
        let _ = writeln!(out, "spurious,{},,,", self.spurious_count());
        out
    }

    /// One row per ground-truth defect.
    pub fn defects_csv(&self) -> String {
        let mut out = String::from("id,defect,matched,iou\n");
        for s in &self.images {
            for (k, o) in s.detection.outcomes.iter().enumerate() {
                let (m, v) = match o {
                    DefectOutcome::Matched { iou, .. } => (1, *iou),
                    DefectOutcome::Missed => (0, 0.0),
                };
                let _ = writeln!(out, "{},{},{},{:.6}", s.id, k, m, v);
            }
        }
        out
    }
}

/// Scores every `(id, fold, truth, predicted)` entry.
pub fn evaluate<'a>(
    entries: impl IntoIterator<Item = (&'a str, Option<usize>, &'a [Mask], &'a [Mask], (usize, usize))>,
    cfg: EvalConfig,
) -> Result<EvalReport> {
    let images = entries
        .into_iter()
        .map(|(id, fold, t, p, shape)| ImageScore::compute(id, fold, t, p, shape, &cfg))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::new(cfg, images)
}
