//! Classical unsupervised contrast enhancement: sequence PCA, pulsed-phase
//! thermography, thermographic signal reconstruction and background-relative
//! contrast maps.

mod contrast;
mod pca;
mod ppt;
mod tsr;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array3, ArrayView2, Axis};

use crate::config::KvDocument;
use crate::dataset::{SequenceStore, Source, ThermalSequence};
use crate::error::{Error, Result};

pub use contrast::{contrast_map, median, Background, ContrastMap};
pub use pca::{pca_basis, sequence_pca, PcaBasis};
pub use ppt::{ppt_transform, PptResult};
pub use tsr::{tsr_fit, TsrConfig, TsrResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EnhanceMethod {
    Pca,
    PptPhase,
    PptAmplitude,
    TsrCoeff,
    TsrDeriv1,
    TsrDeriv2,
    RawContrast,
}

impl EnhanceMethod {
    pub const ALL: [EnhanceMethod; 7] = [
        EnhanceMethod::Pca,
        EnhanceMethod::PptPhase,
        EnhanceMethod::PptAmplitude,
        EnhanceMethod::TsrCoeff,
        EnhanceMethod::TsrDeriv1,
        EnhanceMethod::TsrDeriv2,
        EnhanceMethod::RawContrast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EnhanceMethod::Pca => "pca",
            EnhanceMethod::PptPhase => "ppt_phase",
            EnhanceMethod::PptAmplitude => "ppt_amplitude",
            EnhanceMethod::TsrCoeff => "tsr_coeff",
            EnhanceMethod::TsrDeriv1 => "tsr_deriv1",
            EnhanceMethod::TsrDeriv2 => "tsr_deriv2",
            EnhanceMethod::RawContrast => "raw_contrast",
        }
    }
}

impl fmt::Display for EnhanceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EnhanceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::domain(format!("unknown enhancement method `{s}`")))
    }
}

/// `K` derived images of one sequence, indexed `[k, row, col]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EnhancedStack {
    pub source_id: String,
    pub method: EnhanceMethod,
    pub images: Array3<f64>,
    /// Component index, frequency bin, coefficient order or evaluation time.
    pub labels: Vec<f64>,
    /// Extra method-specific facts, persisted alongside the images.
    pub notes: Vec<(String, String)>,
    pub warnings: Vec<String>,
}

impl EnhancedStack {
    pub fn new(source_id: &str, method: EnhanceMethod, images: Array3<f64>, labels: Vec<f64>) -> Result<Self> {
        let s = EnhancedStack {
            source_id: source_id.to_string(),
            method,
            images,
            labels,
            notes: Vec::new(),
            warnings: Vec::new(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.images.len_of(Axis(0));
        if k == 0 {
            return Err(Error::domain("an enhanced stack needs at least one image"));
        }
        if self.labels.len() != k {
            return Err(Error::shape(format!("{k} labels"), format!("{} labels", self.labels.len())));
        }
        if self.images.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{} stack has non-finite values", self.method)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len_of(Axis(0))
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, k: usize) -> ArrayView2<'_, f64> {
        self.images.index_axis(Axis(0), k)
    }

    /// Identifier of the persisted stack: `<source>.<method>`.
    pub fn stored_id(&self) -> String {
        format!("{}.{}", self.source_id, self.method)
    }

    /// Persists the stack as a sequence whose frames are the images (stored as
    /// f32). Method, labels and notes go to `meta`.
    pub fn write(&self, store: &SequenceStore) -> Result<String> {
        self.validate()?;
        let frames = self.images.mapv(|v| v as f32);
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain(format!("{} stack overflows f32", self.method)));
        }
        let mut seq = ThermalSequence::new(self.stored_id(), frames, 1.0)?;
        seq.source = Source::Imported;
        let mut extra = KvDocument::new();
        extra.push("method", self.method);
        extra.push("source_id", &self.source_id);
        extra.push(
            "labels",
            self.labels.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(","),
        );
        for (k, v) in &self.notes {
            extra.push(format!("note.{k}"), v);
        }
        store.write_sequence_with(&seq, &extra)?;
        Ok(seq.id)
    }

    pub fn read(store: &SequenceStore, id: &str) -> Result<Self> {
        let meta = store.read_meta(id)?;
        let path = store.sequence_dir(id).join("meta");
        let ferr = |field: &str, e: Error| Error::format(&path, field, e.to_string());
        let method: EnhanceMethod = meta.extra.require("method").map_err(|e| ferr("method", e))?;
        let source_id: String = meta.extra.require("source_id").map_err(|e| ferr("source_id", e))?;
        let raw: String = meta.extra.require("labels").map_err(|e| ferr("labels", e))?;
        let labels = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(&path, "labels", e.to_string()))?;
        let seq = store.read_sequence(id)?;
        let mut stack = EnhancedStack::new(&source_id, method, seq.to_f64(), labels)
            .map_err(|e| ferr("labels", e))?;
        stack.notes = meta
            .extra
            .entries()
            .iter()
            .filter_map(|e| e.key.strip_prefix("note.").map(|k| (k.to_string(), e.value.clone())))
            .collect();
        Ok(stack)
    }
}

/// Reshapes pixel-major rows `[pixel][k]` into `[k, row, col]`.
pub(crate) fn pixels_to_stack(values: &[f64], k: usize, rows: usize, cols: usize) -> Array3<f64> {
    Array3::from_shape_fn((k, rows, cols), |(j, r, c)| values[(r * cols + c) * k + j])
}

pub(crate) fn check_frames(frames: &ndarray::ArrayView3<'_, f64>, min_frames: usize) -> Result<()> {
    let (f, m, n) = frames.dim();
    if f < min_frames {
        return Err(Error::domain(format!("need at least {min_frames} frames, got {f}")));
    }
    if m == 0 || n == 0 {
        return Err(Error::domain("frames have an empty spatial dimension"));
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("frames contain non-finite values"));
    }
    Ok(())
}
