use ndarray::{Array2, Array3, Zip};
use rayon::prelude::*;

use super::fd::HeatGrid;
use super::noise::{KeyedNormal, FIXED_PATTERN_STREAM};
use super::scene::SimScene;
use crate::dataset::{GroundTruth, Source, ThermalSequence};
use crate::error::Result;
use crate::mask::Mask;

/// Output of [`simulate_sequence`].
#[derive(Clone, Debug)]
pub struct Simulation {
    pub sequence: ThermalSequence,
    pub ground_truth: GroundTruth,
    /// Noise-free surface rise, `(frames, rows, cols)`.
    pub clean: Array3<f64>,
    /// Heat stored in the specimen at each frame, J.
    pub energy: Vec<f64>,
    pub time_step: f64,
}

/// Simulates a pulsed-thermography acquisition of `scene`.
///
/// Frames hold the surface temperature rise above ambient in kelvin, with
/// the scene's Gaussian and fixed-pattern noise added. Ground truth is the
/// lateral footprint of every defect.
pub fn simulate_sequence(scene: &SimScene) -> Result<Simulation> {
    scene.validate()?;
    let grid = HeatGrid::build(scene)?;
    let hist = grid.run(scene)?;
    let (rows, cols) = (scene.rows, scene.cols);

    let noise = KeyedNormal::new(scene.seed);
    let fixed = if scene.noise.fixed_pattern_sigma > 0.0 {
        Array2::from_shape_fn((rows, cols), |(r, c)| {
            scene.noise.fixed_pattern_sigma
                * noise.sample(FIXED_PATTERN_STREAM, (r * cols + c) as u64)
        })
    } else {
        Array2::zeros((rows, cols))
    };
    let sigma = scene.noise.gaussian_sigma;
    let mut frames = hist.surface.mapv(|v| v as f32);
    frames
        .outer_iter_mut()
        .into_par_iter()
        .zip(hist.surface.outer_iter())
        .enumerate()
        .for_each(|(f, (mut out, clean))| {
            Zip::indexed(&mut out)
                .and(&clean)
                .and(&fixed)
                .for_each(|(r, c), o, &v, &fp| {
                    let mut x = v + fp;
                    if sigma > 0.0 {
                        x += sigma * noise.sample(f as u64, (r * cols + c) as u64);
                    }
                    *o = x as f32;
                });
        });

    let sequence = ThermalSequence {
        id: scene.id.clone(),
        frames,
        frame_rate: scene.frame_rate,
        source: Source::Simulated,
        system_tag: scene.system_tag,
        sample_tag: scene.sample_tag,
        ambient: scene.pulse.ambient,
    };
    let instances: Vec<(u32, Mask)> = scene
        .defects
        .iter()
        .enumerate()
        .map(|(i, d)| (i as u32 + 1, d.footprint(rows, cols)))
        .collect();
    let ground_truth = GroundTruth::from_instances(&scene.id, rows, cols, instances)?;
    Ok(Simulation {
        sequence,
        ground_truth,
        clean: hist.surface,
        energy: hist.energy,
        time_step: hist.time_step,
    })
}
