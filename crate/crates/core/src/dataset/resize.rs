use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Bilinear resize with half-pixel-centre alignment: output pixel `i` samples
/// source coordinate `(i + 0.5)·m/H − 0.5`, clamped to the source extent.
pub fn resize_frame(frame: ArrayView2<'_, f64>, target: (usize, usize)) -> Result<Array2<f64>> {
    let (m, n) = frame.dim();
    let (h, w) = target;
    if h < 1 || w < 1 {
        return Err(Error::domain(format!("resize target {h}x{w} must be at least 1x1")));
    }
    if m < 2 || n < 2 {
        return Err(Error::domain(format!("cannot resize a {m}x{n} frame: need at least 2x2")));
    }
    if (h, w) == (m, n) {
        return Ok(frame.to_owned());
    }
    let taps = |out_len: usize, in_len: usize| -> Vec<(usize, f64)> {
        let scale = in_len as f64 / out_len as f64;
        (0..out_len)
            .map(|i| {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
                let i0 = (x.floor() as usize).min(in_len - 2);
                (i0, x - i0 as f64)
            })
            .collect()
    };
    let rows = taps(h, m);
    let cols = taps(w, n);
    Ok(Array2::from_shape_fn((h, w), |(i, j)| {
        let (r0, fr) = rows[i];
        let (c0, fc) = cols[j];
        let top = frame[[r0, c0]] * (1.0 - fc) + frame[[r0, c0 + 1]] * fc;
        let bottom = frame[[r0 + 1, c0]] * (1.0 - fc) + frame[[r0 + 1, c0 + 1]] * fc;
        top * (1.0 - fr) + bottom * fr
    }))
}
