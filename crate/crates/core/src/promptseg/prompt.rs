use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::mask::PixelRect;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxPrompt {
    pub id: String,
    pub rect: PixelRect,
}

impl BoxPrompt {
    pub fn new(id: impl Into<String>, row0: usize, col0: usize, row1: usize, col1: usize) -> Self {
        BoxPrompt { id: id.into(), rect: PixelRect { row0, col0, row1, col1 } }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let r = &self.rect;
        if self.id.is_empty() || self.id.contains(char::is_whitespace) {
            return Err(Error::domain(format!("invalid prompt id `{}`", self.id)));
        }
        if r.row0 > r.row1 || r.col0 > r.col1 || r.row1 >= rows || r.col1 >= cols {
            return Err(Error::domain(format!(
                "prompt {} box ({}, {}, {}, {}) is not inside a {rows}×{cols} image",
                self.id, r.row0, r.col0, r.row1, r.col1
            )));
        }
        Ok(())
    }
}

/// Grows a rectangle by `margin × height` rows and `margin × width` columns
/// on each side (rounded to the nearest pixel), clamped to the image.
pub fn expand_rect(rect: PixelRect, margin: f64, rows: usize, cols: usize) -> PixelRect {
    let pr = (margin * rect.height() as f64).round() as usize;
    let pc = (margin * rect.width() as f64).round() as usize;
    PixelRect {
        row0: rect.row0.saturating_sub(pr),
        col0: rect.col0.saturating_sub(pc),
        row1: (rect.row1 + pr).min(rows - 1),
        col1: (rect.col1 + pc).min(cols - 1),
    }
}

/// One prompt per ground-truth instance: its tight bounding box dilated by
/// `dilation` per side. Prompt ids are the instance ids.
pub fn prompts_from_ground_truth(gt: &GroundTruth, dilation: f64) -> Result<Vec<BoxPrompt>> {
    if !(dilation.is_finite() && dilation >= 0.0) {
        return Err(Error::domain(format!("dilation must be ≥ 0, got {dilation}")));
    }
    let (rows, cols) = gt.shape();
    Ok(gt
        .instances
        .iter()
        .filter_map(|(id, mask)| {
            mask.bounding_box().map(|bb| BoxPrompt {
                id: id.to_string(),
                rect: expand_rect(bb, dilation, rows, cols),
            })
        })
        .collect())
}

/// Parses `id row0 col0 row1 col1` lines; blank lines and `#` comments are
/// skipped.
pub fn parse_prompts(text: &str, rows: usize, cols: usize) -> Result<Vec<BoxPrompt>> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::config(format!(
                "line {}: expected `id row0 col0 row1 col1`, got {} fields",
                i + 1,
                parts.len()
            )));
        }
        let mut v = [0usize; 4];
        for (slot, (name, s)) in v.iter_mut().zip(["row0", "col0", "row1", "col1"].iter().zip(&parts[1..])) {
            *slot = s
                .parse()
                .map_err(|_| Error::config(format!("line {}: invalid {name} `{s}`", i + 1)))?;
        }
        let p = BoxPrompt::new(parts[0], v[0], v[1], v[2], v[3]);
        p.validate(rows, cols)
            .map_err(|e| Error::config(format!("line {}: {e}", i + 1)))?;
        if !seen.insert(p.id.clone()) {
            return Err(Error::config(format!("line {}: duplicate prompt id `{}`", i + 1, p.id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn format_prompts(prompts: &[BoxPrompt]) -> String {
    let mut s = String::new();
    for p in prompts {
        let r = &p.rect;
        let _ = writeln!(s, "{} {} {} {} {}", p.id, r.row0, r.col0, r.row1, r.col1);
    }
    s
}
