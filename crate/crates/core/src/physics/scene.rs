//! Scene descriptions for the heat-conduction simulator.

use std::path::Path;

use ndarray::Array2;

use super::MaterialProps;
use crate::config::KvDocument;
use crate::dataset::{SampleTag, SystemTag};
use crate::error::{Error, Result};
use crate::mask::Mask;

/// Spatial profile of the excitation, as a gain around 1.0.
#[derive(Clone, Debug, PartialEq)]
pub enum Illumination {
    Uniform,
    /// Linear ramp of relative amplitude `strength` along `angle_deg`
    /// (0° points down the columns).
    Gradient { strength: f64, angle_deg: f64 },
    /// Radial fall-off from the image centre.
    Vignette { strength: f64 },
    /// Explicit per-pixel gains.
    Field(Array2<f64>),
}

impl Illumination {
    /// Per-pixel gains normalised to mean 1.0.
    pub fn gains(&self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let raw = match self {
            Illumination::Uniform => Array2::from_elem((rows, cols), 1.0),
            Illumination::Gradient {
                strength,
                angle_deg,
            } => {
                let (s, c) = angle_deg.to_radians().sin_cos();
                let half_r = (rows as f64 - 1.0) / 2.0;
                let half_c = (cols as f64 - 1.0) / 2.0;
                let reach = (half_r * c).abs() + (half_c * s).abs();
                Array2::from_shape_fn((rows, cols), |(r, cc)| {
                    let proj = (r as f64 - half_r) * c + (cc as f64 - half_c) * s;
                    1.0 + strength * proj / reach.max(f64::MIN_POSITIVE)
                })
            }
            Illumination::Vignette { strength } => {
                let half_r = (rows as f64 - 1.0) / 2.0;
                let half_c = (cols as f64 - 1.0) / 2.0;
                let rmax2 = half_r * half_r + half_c * half_c;
                Array2::from_shape_fn((rows, cols), |(r, c)| {
                    let dr = r as f64 - half_r;
                    let dc = c as f64 - half_c;
                    1.0 - strength * (dr * dr + dc * dc) / rmax2.max(f64::MIN_POSITIVE)
                })
            }
            Illumination::Field(f) => {
                if f.dim() != (rows, cols) {
                    return Err(Error::shape(
                        format!("({rows}, {cols})"),
                        format!("{:?}", f.dim()),
                    ));
                }
                f.clone()
            }
        };
        let mean = raw.mean().unwrap_or(1.0);
        if !(mean.is_finite() && mean > 0.0) {
            return Err(Error::domain("illumination field has non-positive mean"));
        }
        let gains = raw.mapv(|g| g / mean);
        if let Some(bad) = gains.iter().find(|&&g| !(g > 0.0 && g <= 2.0)) {
            return Err(Error::domain(format!(
                "illumination gain {bad} outside (0, 2]"
            )));
        }
        Ok(gains)
    }

    fn parse(value: &str) -> Result<Self> {
        let toks: Vec<&str> = value.split_whitespace().collect();
        let num = |i: usize| -> Result<f64> {
            toks.get(i)
                .ok_or_else(|| Error::config(format!("illumination `{value}`: missing parameter")))?
                .parse::<f64>()
                .map_err(|_| Error::config(format!("illumination `{value}`: bad number")))
        };
        match toks.first().copied() {
            Some("uniform") => Ok(Illumination::Uniform),
            Some("gradient") => Ok(Illumination::Gradient {
                strength: num(1)?,
                angle_deg: if toks.len() > 2 { num(2)? } else { 0.0 },
            }),
            Some("vignette") => Ok(Illumination::Vignette { strength: num(1)? }),
            _ => Err(Error::config(format!(
                "illumination `{value}`: expected uniform | gradient <s> [<deg>] | vignette <s>"
            ))),
        }
    }

    fn to_config(&self) -> Option<String> {
        match self {
            Illumination::Uniform => Some("uniform".into()),
            Illumination::Gradient {
                strength,
                angle_deg,
            } => Some(format!("gradient {strength} {angle_deg}")),
            Illumination::Vignette { strength } => Some(format!("vignette {strength}")),
            Illumination::Field(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSpec {
    /// Absorbed energy density, J/m².
    pub energy: f64,
    /// Seconds; 0 is an ideal impulse.
    pub duration: f64,
    /// Kelvin. Emitted frames are rises above this value.
    pub ambient: f64,
    pub illumination: Illumination,
}

impl PulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.energy.is_finite() && self.energy > 0.0) {
            return Err(Error::config("pulse_energy must be > 0"));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::config("pulse_duration must be >= 0"));
        }
        if !self.ambient.is_finite() {
            return Err(Error::config("ambient must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DefectShape {
    Circle { radius: f64 },
    /// Half extents in pixels.
    Rectangle { half_rows: f64, half_cols: f64 },
}

/// A buried planar inclusion. Lateral quantities are in pixels, depths in
/// metres.
#[derive(Clone, Debug, PartialEq)]
pub struct DefectSpec {
    pub shape: DefectShape,
    /// `(row, col)` of the centre; pixel `(i, j)` has its centre at `(i, j)`.
    pub center: (f64, f64),
    /// Depth of the top face below the heated surface.
    pub depth: f64,
    pub thickness: f64,
    pub fill: MaterialProps,
}

impl DefectSpec {
    pub fn covers(&self, r: usize, c: usize) -> bool {
        let dr = r as f64 - self.center.0;
        let dc = c as f64 - self.center.1;
        match self.shape {
            DefectShape::Circle { radius } => dr * dr + dc * dc <= radius * radius,
            DefectShape::Rectangle {
                half_rows,
                half_cols,
            } => dr.abs() <= half_rows && dc.abs() <= half_cols,
        }
    }

    pub fn footprint(&self, rows: usize, cols: usize) -> Mask {
        Mask::from_fn(rows, cols, |(r, c)| self.covers(r, c))
    }

    fn half_extent(&self) -> (f64, f64) {
        match self.shape {
            DefectShape::Circle { radius } => (radius, radius),
            DefectShape::Rectangle {
                half_rows,
                half_cols,
            } => (half_rows, half_cols),
        }
    }

    pub fn validate(&self, rows: usize, cols: usize, specimen_thickness: f64) -> Result<()> {
        let (hr, hc) = self.half_extent();
        if !(hr > 0.0 && hc > 0.0) {
            return Err(Error::config("defect size must be > 0"));
        }
        let (r0, c0) = self.center;
        if r0 - hr < 0.0
            || c0 - hc < 0.0
            || r0 + hr > rows as f64 - 1.0
            || c0 + hc > cols as f64 - 1.0
        {
            return Err(Error::config(format!(
                "defect at ({r0}, {c0}) extends outside the {rows}x{cols} grid"
            )));
        }
        if !(self.depth > 0.0 && self.thickness > 0.0) {
            return Err(Error::config("defect depth and thickness must be > 0"));
        }
        if self.depth + self.thickness >= specimen_thickness {
            return Err(Error::config(format!(
                "defect depth + thickness ({}) must be < specimen thickness ({specimen_thickness})",
                self.depth + self.thickness
            )));
        }
        if self.footprint(rows, cols).is_empty() {
            return Err(Error::config("defect footprint covers no pixel centre"));
        }
        Ok(())
    }

    fn parse(value: &str, default_fill: MaterialProps) -> Result<Self> {
        let toks: Vec<&str> = value.split_whitespace().collect();
        let err = || {
            Error::config(format!(
                "defect `{value}`: expected `circle <row> <col> <radius> <depth> <thickness> [fill]` \
                 or `rect <row> <col> <half_rows> <half_cols> <depth> <thickness> [fill]`"
            ))
        };
        let nums = |range: std::ops::Range<usize>| -> Result<Vec<f64>> {
            range
                .map(|i| toks.get(i).and_then(|t| t.parse::<f64>().ok()).ok_or_else(err))
                .collect()
        };
        let (shape, rest, n) = match toks.first().copied() {
            Some("circle") => {
                let v = nums(1..6)?;
                (DefectShape::Circle { radius: v[2] }, v, 6)
            }
            Some("rect") | Some("rectangle") => {
                let v = nums(1..7)?;
                (
                    DefectShape::Rectangle {
                        half_rows: v[2],
                        half_cols: v[3],
                    },
                    v,
                    7,
                )
            }
            _ => return Err(err()),
        };
        let fill = match toks.get(n) {
            None => default_fill,
            Some(name) => MaterialProps::preset(name)
                .ok_or_else(|| Error::config(format!("unknown fill material `{name}`")))?,
        };
        if toks.len() > n + 1 {
            return Err(err());
        }
        let k = rest.len();
        Ok(DefectSpec {
            shape,
            center: (rest[0], rest[1]),
            depth: rest[k - 2],
            thickness: rest[k - 1],
            fill,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseModel {
    /// Per-frame i.i.d. Gaussian noise, K.
    pub gaussian_sigma: f64,
    /// Static per-pixel offset, K.
    pub fixed_pattern_sigma: f64,
}

/// Everything the simulator needs. Lateral size is `rows × cols` pixels of
/// `pixel_pitch` metres; the specimen is `thickness` metres deep and is
/// resolved by `layers` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct SimScene {
    pub id: String,
    pub rows: usize,
    pub cols: usize,
    pub pixel_pitch: f64,
    pub thickness: f64,
    pub layers: usize,
    pub material: MaterialProps,
    pub pulse: PulseSpec,
    pub defects: Vec<DefectSpec>,
    pub frame_rate: f64,
    pub frames: usize,
    pub noise: NoiseModel,
    pub seed: u64,
    /// Explicit solver step; chosen automatically when `None`.
    pub time_step: Option<f64>,
    pub system_tag: SystemTag,
    pub sample_tag: SampleTag,
}

pub(crate) const SCENE_KEYS: &[&str] = &[
    "id",
    "rows",
    "cols",
    "pixel_pitch",
    "thickness",
    "layers",
    "material",
    "density",
    "heat_capacity",
    "conductivity",
    "pulse_energy",
    "pulse_duration",
    "ambient",
    "illumination",
    "defect",
    "defect_fill",
    "frame_rate",
    "frames",
    "noise_sigma",
    "fixed_pattern_sigma",
    "seed",
    "time_step",
    "system_tag",
    "sample_tag",
];

impl SimScene {
    /// A defect-free CFRP plate with an ideal pulse and no noise.
    pub fn plate(rows: usize, cols: usize, frames: usize) -> Self {
        SimScene {
            id: "plate".into(),
            rows,
            cols,
            pixel_pitch: 5e-4,
            thickness: 4e-3,
            layers: 32,
            material: MaterialProps::cfrp(),
            pulse: PulseSpec {
                energy: 1e4,
                duration: 0.0,
                ambient: 293.15,
                illumination: Illumination::Uniform,
            },
            defects: Vec::new(),
            frame_rate: 10.0,
            frames,
            noise: NoiseModel::default(),
            seed: 0,
            time_step: None,
            system_tag: SystemTag::Opt,
            sample_tag: SampleTag::Flat,
        }
    }

    pub fn layer_thickness(&self) -> f64 {
        self.thickness / self.layers as f64
    }

    /// Time of frame `k` (0-based). Frame 0 is captured as the pulse fires.
    pub fn frame_time(&self, k: usize) -> f64 {
        k as f64 / self.frame_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 8 || self.cols < 8 {
            return Err(Error::config(format!(
                "grid {}x{} too small: rows and cols must be >= 8",
                self.rows, self.cols
            )));
        }
        if self.frames < 3 {
            return Err(Error::config("frames must be >= 3"));
        }
        if self.layers < 2 {
            return Err(Error::config("layers must be >= 2"));
        }
        for (name, v) in [
            ("pixel_pitch", self.pixel_pitch),
            ("thickness", self.thickness),
            ("frame_rate", self.frame_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be > 0")));
            }
        }
        for (name, v) in [
            ("noise_sigma", self.noise.gaussian_sigma),
            ("fixed_pattern_sigma", self.noise.fixed_pattern_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{name} must be >= 0")));
            }
        }
        if let Some(dt) = self.time_step {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::config("time_step must be > 0"));
            }
        }
        self.pulse.validate()?;
        self.pulse.illumination.gains(self.rows, self.cols)?;
        for d in &self.defects {
            d.validate(self.rows, self.cols, self.thickness)?;
        }
        Ok(())
    }

    pub fn from_config(doc: &KvDocument) -> Result<Self> {
        doc.check_keys(SCENE_KEYS)?;
        let rows = doc.require("rows")?;
        let cols = doc.require("cols")?;
        let frames = doc.require("frames")?;
        let mut s = SimScene::plate(rows, cols, frames);
        s.id = doc.parse_or("id", s.id)?;
        s.pixel_pitch = doc.parse_or("pixel_pitch", s.pixel_pitch)?;
        s.thickness = doc.parse_or("thickness", s.thickness)?;
        s.layers = doc.parse_or("layers", s.layers)?;
        let base = match doc.get("material")? {
            Some(e) => MaterialProps::preset(&e.value)
                .ok_or_else(|| Error::config(format!("line {}: unknown material `{}`", e.line, e.value)))?,
            None => MaterialProps::cfrp(),
        };
        s.material = MaterialProps::new(
            doc.parse_or("density", base.density())?,
            doc.parse_or("heat_capacity", base.heat_capacity())?,
            doc.parse_or("conductivity", base.conductivity())?,
        )?;
        s.pulse.energy = doc.parse_or("pulse_energy", s.pulse.energy)?;
        s.pulse.duration = doc.parse_or("pulse_duration", s.pulse.duration)?;
        s.pulse.ambient = doc.parse_or("ambient", s.pulse.ambient)?;
        if let Some(e) = doc.get("illumination")? {
            s.pulse.illumination = Illumination::parse(&e.value)
                .map_err(|err| Error::config(format!("line {}: {err}", e.line)))?;
        }
        let default_fill = match doc.get("defect_fill")? {
            Some(e) => MaterialProps::preset(&e.value)
                .ok_or_else(|| Error::config(format!("line {}: unknown fill `{}`", e.line, e.value)))?,
            None => MaterialProps::air(),
        };
        for e in doc.get_all("defect") {
            s.defects.push(
                DefectSpec::parse(&e.value, default_fill)
                    .map_err(|err| Error::config(format!("line {}: {err}", e.line)))?,
            );
        }
        s.frame_rate = doc.parse_or("frame_rate", s.frame_rate)?;
        s.noise.gaussian_sigma = doc.parse_or("noise_sigma", 0.0)?;
        s.noise.fixed_pattern_sigma = doc.parse_or("fixed_pattern_sigma", 0.0)?;
        s.seed = doc.parse_or("seed", 0)?;
        s.time_step = doc.parse_opt("time_step")?;
        s.system_tag = doc.parse_or("system_tag", s.system_tag)?;
        s.sample_tag = doc.parse_or("sample_tag", s.sample_tag)?;
        s.validate()?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let doc = KvDocument::read(path)?;
        Self::from_config(&doc).map_err(|e| match e {
            Error::Config(msg) | Error::Domain(msg) => Error::format(path, "scene", msg),
            other => other,
        })
    }

    /// Serialises back to the key/value form. Material fills are written by
    /// preset name when they match one, otherwise the defect line omits it
    /// and the default (`air`) applies; explicit illumination fields cannot
    /// be expressed and yield `None`.
    pub fn to_config(&self) -> Option<KvDocument> {
        let mut d = KvDocument::new();
        d.push("id", &self.id);
        d.push("rows", self.rows);
        d.push("cols", self.cols);
        d.push("pixel_pitch", self.pixel_pitch);
        d.push("thickness", self.thickness);
        d.push("layers", self.layers);
        d.push("density", self.material.density());
        d.push("heat_capacity", self.material.heat_capacity());
        d.push("conductivity", self.material.conductivity());
        d.push("pulse_energy", self.pulse.energy);
        d.push("pulse_duration", self.pulse.duration);
        d.push("ambient", self.pulse.ambient);
        d.push("illumination", self.pulse.illumination.to_config()?);
        for def in &self.defects {
            let fill = ["air", "ptfe", "cfrp", "aluminium"]
                .into_iter()
                .find(|n| MaterialProps::preset(n) == Some(def.fill))?;
            let (r, c) = def.center;
            let v = match def.shape {
                DefectShape::Circle { radius } => format!(
                    "circle {r} {c} {radius} {} {} {fill}",
                    def.depth, def.thickness
                ),
                DefectShape::Rectangle {
                    half_rows,
                    half_cols,
                } => format!(
                    "rect {r} {c} {half_rows} {half_cols} {} {} {fill}",
                    def.depth, def.thickness
                ),
            };
            d.push("defect", v);
        }
        d.push("frame_rate", self.frame_rate);
        d.push("frames", self.frames);
        d.push("noise_sigma", self.noise.gaussian_sigma);
        d.push("fixed_pattern_sigma", self.noise.fixed_pattern_sigma);
        d.push("seed", self.seed);
        if let Some(dt) = self.time_step {
            d.push("time_step", dt);
        }
        d.push("system_tag", self.system_tag);
        d.push("sample_tag", self.sample_tag);
        Some(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCENE: &str = "\
# one shallow hole
id = demo
rows = 32
cols = 40
frames = 20
frame_rate = 5
thickness = 0.004
layers = 16
pulse_energy = 2e4
illumination = gradient 0.2 30
defect = circle 12 14 4 0.001 0.0005
defect = rect 20 30 3 5 0.0015 0.0005 ptfe
noise_sigma = 0.01
seed = 11
sample_tag = r-type
";

    #[test]
    fn parses_scene_document() {
        let s = SimScene::from_config(&KvDocument::parse(SCENE).unwrap()).unwrap();
        assert_eq!((s.rows, s.cols, s.frames), (32, 40, 20));
        assert_eq!(s.defects.len(), 2);
        assert_eq!(s.defects[0].fill, MaterialProps::air());
        assert_eq!(s.defects[1].fill, MaterialProps::ptfe());
        assert_eq!(
            s.defects[1].shape,
            DefectShape::Rectangle {
                half_rows: 3.0,
                half_cols: 5.0
            }
        );
        assert_eq!(s.sample_tag, SampleTag::RType);
        assert_eq!(s.seed, 11);
    }

    #[test]
    fn config_round_trip() {
        let s = SimScene::from_config(&KvDocument::parse(SCENE).unwrap()).unwrap();
        let back = SimScene::from_config(&s.to_config().unwrap()).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn rejects_defect_outside_grid() {
        let text = SCENE.replace("circle 12 14 4", "circle 2 14 4");
        let err = SimScene::from_config(&KvDocument::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("outside"), "{err}");
    }

    #[test]
    fn rejects_defect_through_specimen() {
        let text = SCENE.replace("0.001 0.0005\n", "0.003 0.0015\n");
        assert!(SimScene::from_config(&KvDocument::parse(&text).unwrap()).is_err());
    }

    #[test]
    fn rejects_small_grid_and_short_sequence() {
        let mut s = SimScene::plate(7, 16, 10);
        assert!(s.validate().is_err());
        s.rows = 8;
        assert!(s.validate().is_ok());
        s.frames = 2;
        assert!(s.validate().is_err());
    }

    #[test]
    fn illumination_gains_have_unit_mean() {
        for ill in [
            Illumination::Uniform,
            Illumination::Gradient {
                strength: 0.4,
                angle_deg: 60.0,
            },
            Illumination::Vignette { strength: 0.5 },
        ] {
            let g = ill.gains(17, 23).unwrap();
            assert!((g.mean().unwrap() - 1.0).abs() < 1e-12);
            assert!(g.iter().all(|&v| v > 0.0 && v <= 2.0));
        }
        assert!(Illumination::Gradient {
            strength: 1.5,
            angle_deg: 0.0
        }
        .gains(10, 10)
        .is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimScene::from_config(&KvDocument::parse("rows=8\ncols=8\nframes=4\nfoo=1\n").unwrap())
            .unwrap_err();
        assert!(err.to_string().contains("foo"));
    }
}
