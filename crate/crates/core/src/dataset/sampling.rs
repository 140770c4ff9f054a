//! Frame budgeting and residual-heat correction.
//!
//! Documentation uses 1-based frame numbers where noted; every index this
//! module returns is 0-based.

use ndarray::{s, Array2, Array3, Axis};

use super::ThermalSequence;
use crate::error::{Error, Result};

/// Which frames of a sequence are analysed.
///
/// The first `warmup` frames and the last `cooloff` frames are dropped, and
/// every `interval`-th of the remaining frames is kept.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplingConfig {
    pub warmup: usize,
    pub cooloff: usize,
    pub interval: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            warmup: 15,
            cooloff: 15,
            interval: 5,
        }
    }
}

impl SamplingConfig {
    pub fn new(warmup: usize, cooloff: usize, interval: usize) -> Result<Self> {
        let c = Self {
            warmup,
            cooloff,
            interval,
        };
        if interval == 0 {
            return Err(Error::domain("sampling interval must be >= 1"));
        }
        Ok(c)
    }

    /// Frames left after dropping warm-up and cool-off.
    pub fn retained_len(&self, frames: usize) -> Result<usize> {
        if self.interval == 0 {
            return Err(Error::domain("sampling interval must be >= 1"));
        }
        match frames.checked_sub(self.warmup + self.cooloff) {
            Some(n) if n > 0 => Ok(n),
            _ => Err(Error::domain(format!(
                "sequence of {frames} frames is not longer than warm-up + cool-off ({} + {})",
                self.warmup, self.cooloff
            ))),
        }
    }
}

/// Number of images drawn from `sequences` sequences of `frames` frames
/// each: `B · ⌊(f − L0 − Lf) / LI⌋`. Partial strides yield no image.
pub fn frame_budget(sequences: usize, frames: usize, cfg: &SamplingConfig) -> Result<usize> {
    Ok(sequences * (cfg.retained_len(frames)? / cfg.interval))
}

/// 0-based indices of the sampled frames: `L0, L0 + LI, …`, all below
/// `f − Lf`. In 1-based numbering these are `L0+1, L0+1+LI, … ≤ f−Lf`.
pub fn sample_frames(frames: usize, cfg: &SamplingConfig) -> Result<Vec<usize>> {
    let n = cfg.retained_len(frames)? / cfg.interval;
    Ok((0..n).map(|j| cfg.warmup + j * cfg.interval).collect())
}

/// Retained frames with the residual-heat level removed.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualCorrected {
    /// `(f − L0 − Lf, m, n)`; entry `j` is source frame `L0 + j` (0-based).
    pub frames: Array3<f64>,
    /// Per-pixel mean of the last `Lf` frames.
    pub tail_mean: Array2<f64>,
    /// 0-based source index of `frames[0]`.
    pub first_frame: usize,
}

impl ResidualCorrected {
    /// Adds the tail mean back, recovering the retained input frames.
    pub fn restore(&self) -> Array3<f64> {
        let mut out = self.frames.clone();
        for mut f in out.outer_iter_mut() {
            f += &self.tail_mean;
        }
        out
    }

    /// Maps a 0-based source frame index to a row of `frames`.
    pub fn local_index(&self, source_frame: usize) -> Option<usize> {
        source_frame
            .checked_sub(self.first_frame)
            .filter(|&j| j < self.frames.len_of(Axis(0)))
    }
}

/// Subtracts, per pixel, the mean of the residual-heat stage (the last `Lf`
/// frames) from every retained frame `[L0, f − Lf)`.
pub fn residual_heat_correct(seq: &ThermalSequence, cfg: &SamplingConfig) -> Result<ResidualCorrected> {
    if cfg.cooloff == 0 {
        return Err(Error::config(
            "cool-off length must be >= 1: the residual-heat stage is estimated from it",
        ));
    }
    let f = seq.frame_count();
    let retained = cfg.retained_len(f)?;
    let (m, n) = (seq.rows(), seq.cols());

    let mut tail_sum = Array2::<f64>::zeros((m, n));
    for k in f - cfg.cooloff..f {
        tail_sum.zip_mut_with(&seq.frame(k), |acc, &v| *acc += f64::from(v));
    }
    let tail_mean = tail_sum / cfg.cooloff as f64;

    let mut frames = seq
        .frames
        .slice(s![cfg.warmup..cfg.warmup + retained, .., ..])
        .mapv(f64::from);
    for mut frame in frames.outer_iter_mut() {
        frame -= &tail_mean;
    }
    Ok(ResidualCorrected {
        frames,
        tail_mean,
        first_frame: cfg.warmup,
    })
}
