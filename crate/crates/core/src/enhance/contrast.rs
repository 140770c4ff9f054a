use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::mask::Mask;

/// How the background level of a frame is estimated.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    FrameMedian,
    /// Median over the set pixels of a user-marked region.
    Region(Mask),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContrastMap {
    pub image: Array2<f64>,
    pub background: f64,
    pub warning: Option<String>,
}

/// Median of a non-empty slice; the mean of the two middle values for an
/// even count.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Frame minus a robust background level.
pub fn contrast_map(frame: ArrayView2<'_, f64>, background: &Background) -> Result<ContrastMap> {
    if frame.is_empty() {
        return Err(Error::domain("contrast map of an empty frame"));
    }
    if frame.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("frame contains non-finite values"));
    }
    let mut warning = None;
    let mut samples: Vec<f64> = match background {
        Background::FrameMedian => frame.iter().copied().collect(),
        Background::Region(mask) => {
            if mask.shape() != frame.dim() {
                return Err(Error::shape(format!("{:?}", frame.dim()), format!("{:?}", mask.shape())));
            }
            frame
                .iter()
                .zip(mask.as_array().iter())
                .filter_map(|(&v, &m)| m.then_some(v))
                .collect()
        }
    };
    if samples.is_empty() {
        let msg = "background region is empty; using the whole-frame median".to_string();
        log::warn!("{msg}");
        warning = Some(msg);
        samples = frame.iter().copied().collect();
    }
    let level = median(&mut samples);
    Ok(ContrastMap { image: frame.mapv(|v| v - level), background: level, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::PixelRect;

    #[test]
    fn constant_frame_is_zero() {
        let f = Array2::from_elem((5, 5), 300.0);
        let c = contrast_map(f.view(), &Background::FrameMedian).unwrap();
        assert!(c.image.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hot_square_is_exact() {
        let sq = PixelRect { row0: 2, col0: 2, row1: 4, col1: 4 };
        let f = Array2::from_shape_fn((10, 10), |(r, c)| if sq.contains(r, c) { 3.25 + 1.5 } else { 3.25 });
        let c = contrast_map(f.view(), &Background::FrameMedian).unwrap();
        for ((r, col), &v) in c.image.indexed_iter() {
            assert_eq!(v, if sq.contains(r, col) { 1.5 } else { 0.0 });
        }
    }

    #[test]
    fn region_background() {
        let f = Array2::from_shape_fn((4, 4), |(r, _)| r as f64);
        let region = Mask::from_fn(4, 4, |(r, _)| r == 3);
        let c = contrast_map(f.view(), &Background::Region(region)).unwrap();
        assert_eq!(c.background, 3.0);
        assert!(c.warning.is_none());
        let c = contrast_map(f.view(), &Background::Region(Mask::empty(4, 4))).unwrap();
        assert_eq!(c.background, 1.5);
        assert!(c.warning.is_some());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
