use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::path::Path;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::morphology::Grid;
use super::otsu::otsu_threshold;
use super::prompt::{expand_rect, BoxPrompt};
use crate::dataset::pgm;
use crate::error::{Error, Result};
use crate::mask::{union_all, Mask, PixelRect};

pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentParams {
    /// Box expansion per side as a fraction of the box size.
    pub margin: f64,
    /// Replaces the Otsu threshold in every box when set.
    pub threshold_override: Option<f64>,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams { margin: DEFAULT_MARGIN, threshold_override: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptStatus {
    Found,
    NoDefectFound,
}

impl fmt::Display for PromptStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptStatus::Found => "found",
            PromptStatus::NoDefectFound => "no-defect-found",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PromptResult {
    pub prompt: BoxPrompt,
    pub expanded: PixelRect,
    pub threshold: Option<f64>,
    pub seed: (usize, usize),
    pub mask: Mask,
    pub status: PromptStatus,
    /// `(mean in mask − min) / (max − min)` over the expanded box; 0 when
    /// nothing was found.
    pub confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentationResult {
    pub prompts: Vec<PromptResult>,
    pub semantic: Mask,
    pub params: SegmentParams,
}

impl SegmentationResult {
    pub fn instance_masks(&self) -> Vec<Mask> {
        self.prompts
            .iter()
            .filter(|p| p.status == PromptStatus::Found)
            .map(|p| p.mask.clone())
            .collect()
    }

    /// `prompt status confidence threshold pixels` per line.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "# margin={} threshold={}\n# prompt status confidence threshold pixels\n",
            self.params.margin,
            self.params.threshold_override.map_or("otsu".to_string(), |t| t.to_string())
        );
        for p in &self.prompts {
            let t = p.threshold.map_or("-".to_string(), |t| format!("{t:.6}"));
            let _ = writeln!(s, "{} {} {:.6} {} {}", p.prompt.id, p.status, p.confidence, t, p.mask.count());
        }
        s
    }

    /// Writes `semantic.pgm`, `prompt-<id>.pgm` per prompt and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        pgm::write(&dir.join("semantic.pgm"), &self.semantic)?;
        for p in &self.prompts {
            pgm::write(&dir.join(format!("prompt-{}.pgm", p.prompt.id)), &p.mask)?;
        }
        let path = dir.join("summary.txt");
        std::fs::write(&path, self.summary()).map_err(|e| Error::io(&path, e))
    }
}

/// Segments one instance per prompt on a contrast image.
pub fn segment_with_prompts(
    surface: ArrayView2<'_, f64>,
    prompts: &[BoxPrompt],
    params: &SegmentParams,
) -> Result<SegmentationResult> {
    let (rows, cols) = surface.dim();
    if surface.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("surface contains non-finite values"));
    }
    if !(params.margin.is_finite() && params.margin >= 0.0) {
        return Err(Error::domain(format!("margin must be ≥ 0, got {}", params.margin)));
    }
    if let Some(t) = params.threshold_override {
        if !t.is_finite() {
            return Err(Error::domain("threshold override must be finite"));
        }
    }
    for p in prompts {
        p.validate(rows, cols)?;
    }
    let results: Vec<PromptResult> = prompts.par_iter().map(|p| segment_one(&surface, p, params)).collect();
    let semantic = union_all(results.iter().map(|r| &r.mask))?.unwrap_or_else(|| Mask::empty(rows, cols));
    Ok(SegmentationResult { prompts: results, semantic, params: *params })
}

fn segment_one(surface: &ArrayView2<'_, f64>, prompt: &BoxPrompt, params: &SegmentParams) -> PromptResult {
    let (rows, cols) = surface.dim();
    let b = prompt.rect;
    let e = expand_rect(b, params.margin, rows, cols);

    let mut seed = (b.row0, b.col0);
    for r in b.row0..=b.row1 {
        for c in b.col0..=b.col1 {
            if surface[[r, c]] > surface[[seed.0, seed.1]] {
                seed = (r, c);
            }
        }
    }
    let window: Vec<f64> = (e.row0..=e.row1)
        .flat_map(|r| (e.col0..=e.col1).map(move |c| (r, c)))
        .map(|(r, c)| surface[[r, c]])
        .collect();
    let threshold = match params.threshold_override {
        Some(t) => Some(t),
        None => otsu_threshold(&window),
    };
    let none = |threshold| PromptResult {
        prompt: prompt.clone(),
        expanded: e,
        threshold,
        seed,
        mask: Mask::empty(rows, cols),
        status: PromptStatus::NoDefectFound,
        confidence: 0.0,
    };
    let Some(t) = threshold else {
        return none(None);
    };
    if surface[[seed.0, seed.1]] <= t {
        return none(threshold);
    }

    // Local grid: the expanded box plus a one-pixel halo where the image
    // allows, so box edges behave as background under erosion.
    let g0 = (e.row0.saturating_sub(1), e.col0.saturating_sub(1));
    let g1 = ((e.row1 + 1).min(rows - 1), (e.col1 + 1).min(cols - 1));
    let (gr, gc) = (g1.0 - g0.0 + 1, g1.1 - g0.1 + 1);
    let inside = |r: usize, c: usize| e.contains(r, c) && surface[[r, c]] > t;

    let mut grown = Grid::new(gr, gc);
    let mut queue = VecDeque::from([seed]);
    grown.set(seed.0 - g0.0, seed.1 - g0.1, true);
    while let Some((r, c)) = queue.pop_front() {
        let nbrs = [
            (r.wrapping_sub(1), c),
            (r + 1, c),
            (r, c.wrapping_sub(1)),
            (r, c + 1),
        ];
        for (nr, nc) in nbrs {
            if nr < rows && nc < cols && inside(nr, nc) && !grown.get(nr - g0.0, nc - g0.1) {
                grown.set(nr - g0.0, nc - g0.1, true);
                queue.push_back((nr, nc));
            }
        }
    }

    let clip = |g: &mut Grid| {
        for r in 0..gr {
            for c in 0..gc {
                if !e.contains(r + g0.0, c + g0.1) {
                    g.set(r, c, false);
                }
            }
        }
    };
    let mut cleaned = grown.open();
    clip(&mut cleaned);
    let mut cleaned = cleaned.close();
    clip(&mut cleaned);
    if cleaned.is_empty() {
        return none(threshold);
    }

    let mut mask = Mask::empty(rows, cols);
    let (mut sum, mut count) = (0.0, 0usize);
    for r in 0..gr {
        for c in 0..gc {
            if cleaned.get(r, c) {
                mask.set(r + g0.0, c + g0.1, true);
                sum += surface[[r + g0.0, c + g0.1]];
                count += 1;
            }
        }
    }
    let (lo, hi) = window.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let confidence = if hi > lo { ((sum / count as f64 - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 };
    PromptResult {
        prompt: prompt.clone(),
        expanded: e,
        threshold,
        seed,
        mask,
        status: PromptStatus::Found,
        confidence,
    }
}
