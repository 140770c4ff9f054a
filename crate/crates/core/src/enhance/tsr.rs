use nalgebra::{DMatrix, DVector};
use ndarray::ArrayView3;
use rayon::prelude::*;

use super::{check_frames, pixels_to_stack, EnhanceMethod, EnhancedStack};
use crate::error::{Error, Result};

/// Relative positive floor applied after the offset, as a fraction of the
/// dynamic range of the offset data.
pub const FLOOR_FRACTION: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct TsrConfig {
    /// Polynomial degree in `ln t`.
    pub degree: usize,
    /// Level subtracted before taking logarithms (the pre-pulse value).
    pub offset: f64,
    /// Times (s) at which the log-derivatives are evaluated. Empty means the
    /// sample times.
    pub eval_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsrResult {
    /// Coefficient `j` multiplies `(ln t)^j`.
    pub coefficients: EnhancedStack,
    pub deriv1: EnhancedStack,
    pub deriv2: EnhancedStack,
    /// Pixels with a non-positive sample after the offset; their images are 0.
    pub invalid: Vec<(usize, usize)>,
    pub floor: f64,
}

/// Least-squares fit of `ln T` as a polynomial in `ln t`, pixel by pixel.
///
/// `times[i]` is the time after the pulse of frame `i` and must be positive.
/// Samples that are positive but below the floor are raised to it; a pixel
/// with any non-positive sample is reported invalid.
pub fn tsr_fit(source_id: &str, frames: ArrayView3<'_, f64>, times: &[f64], cfg: &TsrConfig) -> Result<TsrResult> {
    check_frames(&frames, 1)?;
    let (f, m, n) = frames.dim();
    let d = cfg.degree;
    if times.len() != f {
        return Err(Error::shape(format!("{f} times"), format!("{} times", times.len())));
    }
    if f < d + 1 {
        return Err(Error::domain(format!("degree {d} needs at least {} frames, got {f}", d + 1)));
    }
    if let Some(t) = times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::domain(format!("sample times must be > 0, got {t}")));
    }
    let eval_times = if cfg.eval_times.is_empty() { times.to_vec() } else { cfg.eval_times.clone() };
    if let Some(t) = eval_times.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::domain(format!("evaluation times must be > 0, got {t}")));
    }

    let (lo, hi) = frames
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v - cfg.offset), hi.max(v - cfg.offset)));
    let range = hi - lo;
    let floor = if range > 0.0 { FLOOR_FRACTION * range } else { FLOOR_FRACTION * hi.abs().max(f64::MIN_POSITIVE) };

    // Least-squares operator R⁻¹Qᵀ, shared by every pixel.
    let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let v = DMatrix::from_fn(f, d + 1, |i, j| x[i].powi(j as i32));
    let qr = v.qr();
    let r = qr.r();
    let rmax = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax) {
        return Err(Error::domain("sample times do not determine a polynomial of this degree"));
    }
    let solve = r
        .solve_upper_triangular(&qr.q().transpose())
        .ok_or_else(|| Error::domain("singular least-squares system"))?;

    let ne = eval_times.len();
    let xe: Vec<f64> = eval_times.iter().map(|t| t.ln()).collect();
    let width = d + 1 + 2 * ne;
    let mut out = vec![0.0; m * n * width];
    let mut valid = vec![true; m * n];
    out.par_chunks_mut(width).zip(valid.par_iter_mut()).enumerate().for_each(|(px, (row, ok))| {
        let (r, c) = (px / n, px % n);
        let mut y = DVector::zeros(f);
        for t in 0..f {
            let s = frames[[t, r, c]] - cfg.offset;
            if s <= 0.0 {
                *ok = false;
                return;
            }
            y[t] = s.max(floor).ln();
        }
        let coef = &solve * y;
        for j in 0..=d {
            row[j] = coef[j];
        }
        for (e, &xv) in xe.iter().enumerate() {
            let (mut d1, mut d2) = (0.0, 0.0);
            for j in 1..=d {
                d1 += j as f64 * coef[j] * xv.powi(j as i32 - 1);
                if j >= 2 {
                    d2 += (j * (j - 1)) as f64 * coef[j] * xv.powi(j as i32 - 2);
                }
            }
            row[d + 1 + e] = d1;
            row[d + 1 + ne + e] = d2;
        }
    });

    let invalid: Vec<(usize, usize)> = (0..m * n).filter(|&p| !valid[p]).map(|p| (p / n, p % n)).collect();
    let take = |start: usize, len: usize| -> Vec<f64> {
        out.chunks(width).flat_map(|row| row[start..start + len].iter().copied()).collect()
    };
    let mut coefficients = EnhancedStack::new(
        source_id,
        EnhanceMethod::TsrCoeff,
        pixels_to_stack(&take(0, d + 1), d + 1, m, n),
        (0..=d).map(|j| j as f64).collect(),
    )?;
    let mut deriv1 =
        EnhancedStack::new(source_id, EnhanceMethod::TsrDeriv1, pixels_to_stack(&take(d + 1, ne), ne, m, n), eval_times.clone())?;
    let mut deriv2 = EnhancedStack::new(
        source_id,
        EnhanceMethod::TsrDeriv2,
        pixels_to_stack(&take(d + 1 + ne, ne), ne, m, n),
        eval_times,
    )?;
    for s in [&mut coefficients, &mut deriv1, &mut deriv2] {
        s.notes.push(("degree".into(), d.to_string()));
        s.notes.push(("offset".into(), cfg.offset.to_string()));
        s.notes.push(("floor".into(), floor.to_string()));
        s.notes.push(("invalid_pixels".into(), invalid.len().to_string()));
        if !invalid.is_empty() {
            s.warnings.push(format!("{} pixels had non-positive samples and were excluded", invalid.len()));
        }
    }
    if !invalid.is_empty() {
        log::warn!("TSR on {source_id}: {} invalid pixels", invalid.len());
    }
    Ok(TsrResult { coefficients, deriv1, deriv2, invalid, floor })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use num::{BigRational, ToPrimitive, Zero};

    fn cfg(degree: usize) -> TsrConfig {
        TsrConfig { degree, offset: 0.0, eval_times: vec![] }
    }

    #[test]
    fn inverse_sqrt_decay_is_recovered() {
        let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.1).collect();
        let a = 1.7;
        let frames = Array3::from_shape_fn((20, 2, 3), |(t, _, _)| (a - 0.5 * times[t].ln()).exp());
        let c = TsrConfig { degree: 1, offset: 0.0, eval_times: vec![0.15, 0.7, 1.9] };
        let out = tsr_fit("s", frames.view(), &times, &c).unwrap();
        assert!(out.invalid.is_empty());
        assert!((out.coefficients.images[[0, 1, 2]] - a).abs() < 1e-9);
        assert!((out.coefficients.images[[1, 1, 2]] + 0.5).abs() < 1e-9);
        assert!(out.deriv1.images.iter().all(|v| (v + 0.5).abs() < 1e-6));
        assert!(out.deriv2.images.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn full_degree_interpolates() {
        let times = [0.5, 1.0, 2.0, 3.0, 5.0];
        let vals = [4.0, 2.5, 3.0, 1.2, 0.9];
        let frames = Array3::from_shape_fn((5, 1, 1), |(t, _, _)| vals[t]);
        let out = tsr_fit("i", frames.view(), &times, &cfg(4)).unwrap();
        for (t, &v) in times.iter().zip(vals.iter()) {
            let x = t.ln();
            let fit: f64 = (0..5).map(|j| out.coefficients.images[[j, 0, 0]] * x.powi(j as i32)).sum();
            assert!((fit - v.ln()).abs() < 1e-6 * v.ln().abs().max(1.0));
        }
    }

    fn rational(v: f64) -> BigRational {
        BigRational::from_float(v).unwrap()
    }

    /// Exact normal equations `VᵀV c = Vᵀy` solved by Gaussian elimination
    /// over the rationals.
    fn exact_fit(x: &[f64], y: &[f64], degree: usize) -> Vec<f64> {
        let k = degree + 1;
        let xr: Vec<BigRational> = x.iter().map(|&v| rational(v)).collect();
        let yr: Vec<BigRational> = y.iter().map(|&v| rational(v)).collect();
        let pow = |v: &BigRational, e: usize| (0..e).fold(BigRational::from_integer(1.into()), |a, _| a * v);
        let mut a: Vec<Vec<BigRational>> = (0..k)
            .map(|i| {
                let mut row: Vec<BigRational> = (0..k)
                    .map(|j| xr.iter().map(|v| pow(v, i + j)).fold(BigRational::zero(), |s, t| s + t))
                    .collect();
                row.push(xr.iter().zip(&yr).map(|(v, w)| pow(v, i) * w).fold(BigRational::zero(), |s, t| s + t));
                row
            })
            .collect();
        for col in 0..k {
            let piv = (col..k).find(|&r| !a[r][col].is_zero()).unwrap();
            a.swap(col, piv);
            for r in 0..k {
                if r != col && !a[r][col].is_zero() {
                    let factor = &a[r][col] / &a[col][col];
                    for j in col..=k {
                        let sub = &factor * &a[col][j];
                        a[r][j] -= sub;
                    }
                }
            }
        }
        (0..k).map(|i| (&a[i][k] / &a[i][i]).to_f64().unwrap()).collect()
    }

    #[test]
    fn matches_exact_normal_equations() {
        let times: Vec<f64> = (0..24).map(|k| 0.4 + 0.25 * k as f64).collect();
        let frames = Array3::from_shape_fn((24, 1, 2), |(t, _, c)| {
            let s = times[t];
            2.0 / s.sqrt() + 0.3 * (0.7 * s + c as f64).sin() + 1.5
        });
        let out = tsr_fit("o", frames.view(), &times, &cfg(4)).unwrap();
        let x: Vec<f64> = times.iter().map(|t| t.ln()).collect();
        for c in 0..2 {
            let y: Vec<f64> = (0..24).map(|t| frames[[t, 0, c]].ln()).collect();
            let want = exact_fit(&x, &y, 4);
            for (j, w) in want.iter().enumerate() {
                let got = out.coefficients.images[[j, 0, c]];
                assert!((got - w).abs() < 1e-7 * w.abs().max(1.0), "coef {j}: {got} vs {w}");
            }
        }
    }

    #[test]
    fn non_positive_pixels_reported() {
        let times = [1.0, 2.0, 3.0];
        let mut frames = Array3::from_elem((3, 2, 2), 5.0);
        frames[[1, 0, 1]] = 1.0;
        let c = TsrConfig { degree: 1, offset: 1.0, eval_times: vec![] };
        let out = tsr_fit("n", frames.view(), &times, &c).unwrap();
        assert_eq!(out.invalid, vec![(0, 1)]);
        assert_eq!(out.coefficients.images[[0, 0, 1]], 0.0);
        assert!(!out.coefficients.warnings.is_empty());
    }

    #[test]
    fn rejects_bad_configuration() {
        let frames = Array3::from_elem((3, 1, 1), 1.0);
        assert!(tsr_fit("b", frames.view(), &[1.0, 2.0, 3.0], &cfg(3)).is_err());
        assert!(tsr_fit("b", frames.view(), &[0.0, 2.0, 3.0], &cfg(1)).is_err());
        assert!(tsr_fit("b", frames.view(), &[1.0, 2.0], &cfg(1)).is_err());
    }
}
