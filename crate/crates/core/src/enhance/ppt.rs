use ndarray::ArrayView3;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{check_frames, pixels_to_stack, EnhanceMethod, EnhancedStack};
use crate::error::Result;

/// Phase and amplitude images of bins `0..=F/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct PptResult {
    pub phase: EnhancedStack,
    pub amplitude: EnhancedStack,
}

/// Per-pixel DFT over time (`X_k = Σ x_t e^{-2πikt/F}`), unwindowed.
pub fn ppt_transform(source_id: &str, frames: ArrayView3<'_, f64>) -> Result<PptResult> {
    check_frames(&frames, 2)?;
    let (f, m, n) = frames.dim();
    let bins = f / 2 + 1;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(f);

    let mut phase = vec![0.0; m * n * bins];
    let mut amplitude = vec![0.0; m * n * bins];
    phase
        .par_chunks_mut(bins)
        .zip(amplitude.par_chunks_mut(bins))
        .enumerate()
        .for_each_init(
            || (vec![Complex::default(); f], vec![Complex::default(); fft.get_inplace_scratch_len()]),
            |(buf, scratch), (px, (ph, amp))| {
                let (r, c) = (px / n, px % n);
                for (t, b) in buf.iter_mut().enumerate() {
                    *b = Complex::new(frames[[t, r, c]], 0.0);
                }
                fft.process_with_scratch(buf, scratch);
                // Bin 0 and, for even F, the Nyquist bin are exactly real.
                buf[0].im = 0.0;
                if f % 2 == 0 {
                    buf[f / 2].im = 0.0;
                }
                for k in 0..bins {
                    ph[k] = buf[k].im.atan2(buf[k].re);
                    amp[k] = buf[k].norm();
                }
            },
        );

    let labels: Vec<f64> = (0..bins).map(|k| k as f64).collect();
    let mut phase = EnhancedStack::new(source_id, EnhanceMethod::PptPhase, pixels_to_stack(&phase, bins, m, n), labels.clone())?;
    let mut amplitude =
        EnhancedStack::new(source_id, EnhanceMethod::PptAmplitude, pixels_to_stack(&amplitude, bins, m, n), labels)?;
    for s in [&mut phase, &mut amplitude] {
        s.notes.push(("window".into(), "none".into()));
        s.notes.push(("frames".into(), f.to_string()));
    }
    Ok(PptResult { phase, amplitude })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn matches_naive_dft() {
        let (f, m, n) = (16, 4, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let frames = Array3::from_shape_fn((f, m, n), |_| rng.random_range(-2.0..2.0));
        let out = ppt_transform("x", frames.view()).unwrap();
        for r in 0..m {
            for c in 0..n {
                for k in 0..=f / 2 {
                    let (mut re, mut im) = (0.0, 0.0);
                    for t in 0..f {
                        let w = -2.0 * PI * (k * t) as f64 / f as f64;
                        re += frames[[t, r, c]] * w.cos();
                        im += frames[[t, r, c]] * w.sin();
                    }
                    assert!((out.amplitude.images[[k, r, c]] - re.hypot(im)).abs() < 1e-9);
                    let d = out.phase.images[[k, r, c]] - im.atan2(re);
                    let wrapped = (d + PI).rem_euclid(2.0 * PI) - PI;
                    assert!(wrapped.abs() < 1e-9, "bin {k}: {d}");
                }
            }
        }
    }

    #[test]
    fn constant_pixel_is_dc_only() {
        let frames = Array3::from_elem((8, 2, 2), 3.0);
        let out = ppt_transform("dc", frames.view()).unwrap();
        assert!((out.amplitude.images[[0, 0, 0]] - 24.0).abs() < 1e-12);
        assert_eq!(out.phase.images[[0, 0, 0]], 0.0);
        for k in 1..=4 {
            assert!(out.amplitude.images[[k, 1, 1]] < 1e-12);
        }
    }

    #[test]
    fn cosine_peaks_at_its_bin() {
        let f = 16;
        let frames = Array3::from_shape_fn((f, 1, 1), |(t, _, _)| (2.0 * PI * 2.0 * t as f64 / f as f64).cos());
        let out = ppt_transform("cos", frames.view()).unwrap();
        let amp = out.amplitude.images.slice(ndarray::s![.., 0, 0]).to_vec();
        let best = (0..amp.len()).max_by(|&a, &b| amp[a].total_cmp(&amp[b])).unwrap();
        assert_eq!(best, 2);
        assert!(out.phase.images[[2, 0, 0]].abs() < 1e-12);
        assert_eq!(out.phase.len(), 9);
    }

    #[test]
    fn phase_scale_invariant_amplitude_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames = Array3::from_shape_fn((10, 3, 3), |_| rng.random_range(0.0..1.0));
        let scaled = frames.mapv(|v| v * 4.0);
        let a = ppt_transform("a", frames.view()).unwrap();
        let b = ppt_transform("b", scaled.view()).unwrap();
        for (x, y) in a.phase.images.iter().zip(b.phase.images.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.amplitude.images.iter().zip(b.amplitude.images.iter()) {
            assert!((4.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }
}
