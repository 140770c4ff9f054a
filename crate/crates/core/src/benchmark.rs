//! Seeded synthetic benchmark: simulated plates with buried delaminations,
//! box prompts derived from ground truth, segmentation on peak-frame contrast
//! maps and defect-level scoring.

use ndarray::{Array3, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::{SampleTag, SequenceStore, SystemTag, ThermalSequence};
use crate::enhance::{contrast_map, median, Background};
use crate::error::{Error, Result};
use crate::mask::{union_all, Mask, PixelRect};
use crate::metrics::{EvalConfig, EvalReport, ImageScore};
use crate::physics::{simulate_sequence, DefectShape, DefectSpec, Illumination, MaterialProps, NoiseModel, SimScene};
use crate::promptseg::{
    expand_rect, prompts_from_ground_truth, segment_with_prompts, BoxPrompt, PromptResult, SegmentParams,
    SegmentationResult,
};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkConfig {
    pub scenes: usize,
    /// The first `flat` scenes use uniform illumination; the rest are
    /// curved-style scenes with a non-uniform heating field.
    pub flat: usize,
    pub seed: u64,
    /// Prompt dilation per side.
    pub dilation: f64,
    pub segment: SegmentParams,
    pub eval: EvalConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            scenes: 20,
            flat: 15,
            seed: 20240601,
            dilation: 0.1,
            segment: SegmentParams::default(),
            eval: EvalConfig::default(),
        }
    }
}

const GRID: usize = 64;
const DEPTHS_MM: [f64; 6] = [0.375, 0.5, 0.625, 0.75, 0.875, 1.0];

/// Scene `index` of the benchmark. Each scene holds two or three separated
/// air delaminations one layer thick, at depths between 0.375 and 1 mm in a
/// 4 mm CFRP plate.
pub fn benchmark_scene(index: usize, flat: bool, seed: u64) -> SimScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    let mut s = SimScene::plate(GRID, GRID, 60);
    s.id = format!("bench-{index:02}");
    s.seed = seed.wrapping_add(index as u64);
    s.noise = NoiseModel { gaussian_sigma: 0.05, fixed_pattern_sigma: 0.03 };
    if flat {
        s.system_tag = SystemTag::Opt;
        s.sample_tag = SampleTag::Flat;
    } else {
        s.system_tag = SystemTag::Popt;
        s.sample_tag = SampleTag::RType;
        s.pulse.illumination = if rng.random_bool(0.5) {
            Illumination::Gradient { strength: rng.random_range(0.3..0.5), angle_deg: rng.random_range(0.0..360.0) }
        } else {
            Illumination::Vignette { strength: rng.random_range(0.3..0.5) }
        };
    }
    let count = rng.random_range(2..=3);
    let layer = s.layer_thickness();
    let mut boxes: Vec<PixelRect> = Vec::new();
    while s.defects.len() < count {
        let shape = if rng.random_bool(0.5) {
            DefectShape::Circle { radius: rng.random_range(4.0..7.0) }
        } else {
            DefectShape::Rectangle { half_rows: rng.random_range(3.5..6.5), half_cols: rng.random_range(3.5..6.5) }
        };
        let center = (rng.random_range(12.0..52.0), rng.random_range(12.0..52.0));
        let depth = DEPTHS_MM[rng.random_range(0..DEPTHS_MM.len())] * 1e-3;
        let d = DefectSpec { shape, center, depth, thickness: layer, fill: MaterialProps::air() };
        let Some(bb) = d.footprint(GRID, GRID).bounding_box() else { continue };
        // Keep dilated boxes apart so every prompt sees a single defect.
        let padded = expand_rect(bb, 0.5, GRID, GRID);
        let apart = boxes.iter().all(|o| {
            padded.row1 < o.row0 || o.row1 < padded.row0 || padded.col1 < o.col0 || o.col1 < padded.col0
        });
        if apart {
            boxes.push(padded);
            s.defects.push(d);
        }
    }
    s
}

pub fn standard_scenes(cfg: &BenchmarkConfig) -> Vec<SimScene> {
    (0..cfg.scenes).map(|i| benchmark_scene(i, i < cfg.flat, cfg.seed)).collect()
}

/// Frame at which the prompt's box stands out most from its surroundings:
/// the largest `max(box) − median(expanded box)` of the frame's contrast
/// map. Uses no ground truth.
pub fn peak_frame(frames: &ArrayView3<'_, f64>, prompt: &BoxPrompt, margin: f64) -> usize {
    let (f, rows, cols) = frames.dim();
    let b = prompt.rect;
    let e = expand_rect(b, margin, rows, cols);
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..f {
        let frame = frames.index_axis(Axis(0), k);
        let peak = (b.row0..=b.row1)
            .flat_map(|r| (b.col0..=b.col1).map(move |c| (r, c)))
            .map(|(r, c)| frame[[r, c]])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut around: Vec<f64> = (e.row0..=e.row1)
            .flat_map(|r| (e.col0..=e.col1).map(move |c| (r, c)))
            .map(|(r, c)| frame[[r, c]])
            .collect();
        let score = peak - median(&mut around);
        if score > best.0 {
            best = (score, k);
        }
    }
    best.1
}

/// Divides every pixel by its value in the frame of strongest overall
/// heating, cancelling a multiplicative illumination field. Frames before
/// the reference are dropped. Returns the normalised frames and the index of
/// the reference frame.
pub fn normalise_heating(frames: &ArrayView3<'_, f64>) -> Result<(Array3<f64>, usize)> {
    let f = frames.len_of(Axis(0));
    let reference = (0..f)
        .map(|k| {
            let mut v: Vec<f64> = frames.index_axis(Axis(0), k).iter().copied().collect();
            (median(&mut v), k)
        })
        .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a })
        .1;
    let base = frames.index_axis(Axis(0), reference).to_owned();
    if base.iter().any(|&v| v <= 0.0) {
        return Err(Error::domain("reference frame has non-positive pixels; cannot normalise"));
    }
    let kept = frames.slice(ndarray::s![reference.., .., ..]);
    let mut out = kept.to_owned();
    for mut fr in out.outer_iter_mut() {
        fr /= &base;
    }
    Ok((out, reference))
}

/// Segments each prompt on the contrast map of its own peak frame.
pub fn segment_sequence(seq: &ThermalSequence, prompts: &[BoxPrompt], params: &SegmentParams) -> Result<SegmentationResult> {
    let raw = seq.to_f64();
    let (frames, _) = normalise_heating(&raw.view())?;
    let (rows, cols) = (seq.rows(), seq.cols());
    for p in prompts {
        p.validate(rows, cols)?;
    }
    let results: Vec<PromptResult> = prompts
        .par_iter()
        .map(|p| {
            let k = peak_frame(&frames.view(), p, params.margin);
            let map = contrast_map(frames.index_axis(Axis(0), k), &Background::FrameMedian)?;
            let mut out = segment_with_prompts(map.image.view(), std::slice::from_ref(p), params)?;
            Ok(out.prompts.remove(0))
        })
        .collect::<Result<_>>()?;
    let semantic = union_all(results.iter().map(|r| &r.mask))?.unwrap_or_else(|| Mask::empty(rows, cols));
    Ok(SegmentationResult { prompts: results, semantic, params: *params })
}

#[derive(Clone, Debug)]
pub struct BenchmarkOutcome {
    pub report: EvalReport,
    pub segmentations: Vec<SegmentationResult>,
}

/// Scores stored sequences: prompts come from each sequence's ground truth
/// dilated by `dilation`, segmentation uses [`segment_sequence`]. Entries are
/// `(sequence id, fold)`.
pub fn evaluate_stored(
    store: &SequenceStore,
    entries: &[(String, Option<usize>)],
    dilation: f64,
    params: &SegmentParams,
    eval: &EvalConfig,
) -> Result<BenchmarkOutcome> {
    let runs: Vec<(ImageScore, SegmentationResult)> = entries
        .iter()
        .map(|(id, fold)| {
            let seq = store.read_sequence(id)?;
            let gt = store
                .read_ground_truth(id)?
                .ok_or_else(|| Error::NotFound(format!("sequence {id} has no ground truth")))?;
            let prompts = prompts_from_ground_truth(&gt, dilation)?;
            let seg = segment_sequence(&seq, &prompts, params)?;
            let truth: Vec<Mask> = gt.instances.iter().map(|(_, m)| m.clone()).collect();
            let score = ImageScore::compute(id, *fold, &truth, &seg.instance_masks(), gt.shape(), eval)?;
            Ok((score, seg))
        })
        .collect::<Result<_>>()?;
    let (scores, segmentations): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(BenchmarkOutcome { report: EvalReport::new(*eval, scores)?, segmentations })
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkOutcome> {
    let scenes = standard_scenes(cfg);
    let runs: Vec<(ImageScore, SegmentationResult)> = scenes
        .iter()
        .map(|scene| {
            let sim = simulate_sequence(scene)?;
            let prompts = prompts_from_ground_truth(&sim.ground_truth, cfg.dilation)?;
            let seg = segment_sequence(&sim.sequence, &prompts, &cfg.segment)?;
            let truth: Vec<Mask> = sim.ground_truth.instances.iter().map(|(_, m)| m.clone()).collect();
            let score = ImageScore::compute(
                &scene.id,
                None,
                &truth,
                &seg.instance_masks(),
                (scene.rows, scene.cols),
                &cfg.eval,
            )?;
            Ok((score, seg))
        })
        .collect::<Result<_>>()?;
    let (scores, segmentations): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    Ok(BenchmarkOutcome { report: EvalReport::new(cfg.eval, scores)?, segmentations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_reproducible_and_valid() {
        let cfg = BenchmarkConfig::default();
        let a = standard_scenes(&cfg);
        assert_eq!(a, standard_scenes(&cfg));
        assert_eq!(a.iter().filter(|s| s.sample_tag == SampleTag::Flat).count(), 15);
        for s in &a {
            s.validate().unwrap();
            assert!((2..=3).contains(&s.defects.len()));
            let flat = s.sample_tag == SampleTag::Flat;
            assert_eq!(flat, s.pulse.illumination == Illumination::Uniform);
        }
    }

    #[test]
    fn stored_evaluation_matches_direct_scoring() {
        let cfg = BenchmarkConfig { scenes: 2, flat: 1, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let store = SequenceStore::open(dir.path()).unwrap();
        let mut entries = Vec::new();
        for scene in standard_scenes(&cfg) {
            let sim = simulate_sequence(&scene).unwrap();
            store.write_sequence(&sim.sequence).unwrap();
            store.write_ground_truth(&sim.ground_truth).unwrap();
            entries.push((scene.id.clone(), None));
        }
        let stored = evaluate_stored(&store, &entries, cfg.dilation, &cfg.segment, &cfg.eval).unwrap();
        let direct = run_benchmark(&cfg).unwrap();
        // Frames are stored as f32 in both paths, so the reports agree exactly.
        assert_eq!(stored.report.to_csv(), direct.report.to_csv());
        store.write_sequence(&ThermalSequence::new("bare", Array3::ones((3, 8, 8)), 1.0).unwrap()).unwrap();
        let missing = evaluate_stored(&store, &[("bare".into(), None)], 0.1, &cfg.segment, &cfg.eval);
        assert!(matches!(missing, Err(Error::NotFound(_))));
    }

    #[test]
    fn normalisation_cancels_a_gain_field() {
        let gain = Array3::from_shape_fn((1, 4, 4), |(_, r, c)| 0.6 + 0.1 * (r + c) as f64);
        let curve = [0.0, 5.0, 9.0, 6.0, 4.0];
        let frames = Array3::from_shape_fn((5, 4, 4), |(k, r, c)| curve[k] * gain[[0, r, c]]);
        let (n, reference) = normalise_heating(&frames.view()).unwrap();
        assert_eq!(reference, 2);
        assert_eq!(n.dim(), (3, 4, 4));
        for (k, fr) in n.outer_iter().enumerate() {
            let want = curve[k + 2] / 9.0;
            assert!(fr.iter().all(|v| (v - want).abs() < 1e-12));
        }
    }

    #[test]
    fn peak_frame_follows_the_box_contrast() {
        let frames = Array3::from_shape_fn((6, 12, 12), |(k, r, c)| {
            let inside = (4..8).contains(&r) && (4..8).contains(&c);
            1.0 + if inside { [0.0, 0.1, 0.4, 0.9, 0.5, 0.2][k] } else { 0.0 }
        });
        let p = BoxPrompt::new("1", 4, 4, 7, 7);
        assert_eq!(peak_frame(&frames.view(), &p, 0.5), 3);
    }
}
