use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::mask::{union_all, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Simulated,
    Imported,
}

/// Acquisition hardware family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SystemTag {
    Opt,
    Popt,
    Other,
}

/// Specimen geometry class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleTag {
    Flat,
    RType,
}

macro_rules! text_enum {
    ($ty:ty, $what:literal, $($variant:path => $text:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($variant => $text),+ })
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                $(if s.eq_ignore_ascii_case($text) { return Ok($variant); })+
                Err(Error::config(format!(concat!("unknown ", $what, " `{}`"), s)))
            }
        }
    };
}

text_enum!(Source, "source", Source::Simulated => "simulated", Source::Imported => "imported");
text_enum!(SystemTag, "system tag", SystemTag::Opt => "OPT", SystemTag::Popt => "POPT", SystemTag::Other => "other");
text_enum!(SampleTag, "sample tag", SampleTag::Flat => "flat", SampleTag::RType => "r-type");

/// A volumetric thermal acquisition: `f` frames of `m × n` pixels.
///
/// `frames` is indexed `[frame, row, col]` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct ThermalSequence {
    pub id: String,
    pub frames: Array3<f32>,
    pub frame_rate: f64,
    pub source: Source,
    pub system_tag: SystemTag,
    pub sample_tag: SampleTag,
    /// Kelvin.
    pub ambient: f64,
}

impl ThermalSequence {
    pub fn new(id: impl Into<String>, frames: Array3<f32>, frame_rate: f64) -> Result<Self> {
        let s = Self {
            id: id.into(),
            frames,
            frame_rate,
            source: Source::Imported,
            system_tag: SystemTag::Other,
            sample_tag: SampleTag::Flat,
            ambient: 293.15,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (f, m, n) = self.frames.dim();
        if f == 0 || m == 0 || n == 0 {
            return Err(Error::domain(format!("sequence `{}` has an empty dimension", self.id)));
        }
        if self.id.is_empty() || self.id.contains(['/', '\\', '\t', '\n']) || self.id.starts_with('.') {
            return Err(Error::domain(format!("invalid sequence id `{}`", self.id)));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(Error::domain("frame_rate must be > 0"));
        }
        if let Some(bad) = self.frames.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!(
                "sequence `{}` has a non-finite value at flat index {bad}",
                self.id
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len_of(Axis(0))
    }

    pub fn rows(&self) -> usize {
        self.frames.len_of(Axis(1))
    }

    pub fn cols(&self) -> usize {
        self.frames.len_of(Axis(2))
    }

    pub fn frame(&self, k: usize) -> ArrayView2<'_, f32> {
        self.frames.index_axis(Axis(0), k)
    }

    /// All frames widened to `f64`.
    pub fn to_f64(&self) -> Array3<f64> {
        self.frames.mapv(f64::from)
    }

    /// Temperature history of one pixel.
    pub fn pixel_curve(&self, row: usize, col: usize) -> Vec<f64> {
        self.frames
            .slice(ndarray::s![.., row, col])
            .iter()
            .map(|&v| f64::from(v))
            .collect()
    }
}

/// Reference segmentation of one sequence. Every frame of a sequence shares
/// the same ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub sequence_id: String,
    /// `(defect id, mask)`, ids unique.
    pub instances: Vec<(u32, Mask)>,
    pub semantic: Mask,
    /// `(annotator id, mask)` for the individual expert labels.
    pub annotators: Vec<(String, Mask)>,
}

impl GroundTruth {
    pub fn from_instances(
        sequence_id: &str,
        rows: usize,
        cols: usize,
        instances: Vec<(u32, Mask)>,
    ) -> Result<Self> {
        let semantic = union_all(instances.iter().map(|(_, m)| m))?
            .unwrap_or_else(|| Mask::empty(rows, cols));
        let gt = Self {
            sequence_id: sequence_id.to_string(),
            instances,
            semantic,
            annotators: Vec::new(),
        };
        gt.validate(rows, cols)?;
        Ok(gt)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.semantic.shape()
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        let all = self
            .instances
            .iter()
            .map(|(_, m)| m)
            .chain(self.annotators.iter().map(|(_, m)| m))
            .chain(std::iter::once(&self.semantic));
        for m in all {
            if m.shape() != (rows, cols) {
                return Err(Error::shape(format!("({rows}, {cols})"), format!("{:?}", m.shape())));
            }
        }
        let mut ids: Vec<u32> = self.instances.iter().map(|(i, _)| *i).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("duplicate defect id in ground truth"));
        }
        let union = union_all(self.instances.iter().map(|(_, m)| m))?
            .unwrap_or_else(|| Mask::empty(rows, cols));
        if union != self.semantic {
            return Err(Error::domain("semantic mask is not the union of the instance masks"));
        }
        Ok(())
    }

    /// Semantic mask as 0/1 values.
    pub fn semantic_f64(&self) -> Array2<f64> {
        self.semantic.to_f64()
    }
}
