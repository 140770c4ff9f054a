use ndarray::Array2;

use crate::error::{Error, Result};
use crate::mask::Mask;

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(())
}

/// `Σyŷ / (Σy² + Σŷ² − Σyŷ)` over real-valued maps. Two all-zero maps score
/// 1.0.
pub fn iou_values(y: &Array2<f64>, yhat: &Array2<f64>) -> Result<f64> {
    check_shapes(y, yhat)?;
    let (mut inter, mut yy, mut pp) = (0.0, 0.0, 0.0);
    for (&a, &b) in y.iter().zip(yhat.iter()) {
        inter += a * b;
        yy += a * a;
        pp += b * b;
    }
    let denom = yy + pp - inter;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok(inter / denom)
}

/// Intersection over union of two binary masks; equals `|y ∩ ŷ| / |y ∪ ŷ|`.
pub fn iou(y: &Mask, yhat: &Mask) -> Result<f64> {
    y.check_same_shape(yhat)?;
    iou_values(&y.to_f64(), &yhat.to_f64())
}

/// Pixel-level `(precision, recall)`.
///
/// An empty prediction has precision 1 (no false positives); an empty ground
/// truth has recall 1 (nothing to miss).
pub fn precision_recall(y: &Mask, yhat: &Mask) -> Result<(f64, f64)> {
    y.check_same_shape(yhat)?;
    let (mut tp, mut fp, mut fne) = (0usize, 0usize, 0usize);
    for (&a, &b) in y.as_array().iter().zip(yhat.as_array().iter()) {
        match (a, b) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fne += 1,
            (false, false) => {}
        }
    }
    Ok((ratio_or_one(tp, tp + fp), ratio_or_one(tp, tp + fne)))
}

pub(crate) fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Weighted harmonic mean `(γ²+1)PR / (γ²P + R)`; `γ > 1` favours recall.
/// Defined as 0 when `P = R = 0`.
pub fn f_score(precision: f64, recall: f64, gamma: f64) -> Result<f64> {
    for (name, v) in [("precision", precision), ("recall", recall)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::domain(format!("gamma must be > 0, got {gamma}")));
    }
    let g2 = gamma * gamma;
    let denom = g2 * precision + recall;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((g2 + 1.0) * precision * recall / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::PixelRect;
    use proptest::prelude::*;

    fn block(r0: usize, c0: usize, r1: usize, c1: usize) -> Mask {
        Mask::rect(6, 6, PixelRect { row0: r0, col0: c0, row1: r1, col1: c1 })
    }

    #[test]
    fn iou_examples() {
        let a = block(1, 1, 2, 2);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &block(4, 4, 5, 5)).unwrap(), 0.0);
        assert_eq!(iou(&a, &block(1, 2, 2, 3)).unwrap(), 2.0 / 6.0);
        assert_eq!(iou(&Mask::empty(3, 3), &Mask::empty(3, 3)).unwrap(), 1.0);
        assert!(iou(&a, &Mask::empty(5, 6)).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let y = block(0, 0, 1, 1);
        assert_eq!(precision_recall(&y, &y).unwrap(), (1.0, 1.0));
        assert_eq!(precision_recall(&y, &block(0, 0, 1, 3)).unwrap(), (0.5, 1.0));
        assert_eq!(precision_recall(&y, &Mask::empty(6, 6)).unwrap(), (1.0, 0.0));
        assert!(precision_recall(&y, &Mask::empty(2, 2)).is_err());
    }

    #[test]
    fn f_score_examples() {
        for v in [0.1, 0.37, 0.5, 1.0] {
            assert!((f_score(v, v, 2.0).unwrap() - v).abs() < 1e-15);
        }
        assert!((f_score(0.5, 1.0, 2.0).unwrap() - 5.0 / 6.0).abs() < 1e-12);
        assert!(f_score(1.0, 0.5, 2.0).unwrap() < f_score(0.5, 1.0, 2.0).unwrap());
        assert_eq!(f_score(0.0, 0.0, 2.0).unwrap(), 0.0);
        assert!(f_score(1.2, 0.5, 2.0).is_err());
    }

    proptest! {
        #[test]
        fn f_score_monotone(p in 0.0f64..=1.0, r in 0.0f64..=1.0, dp in 0.0f64..0.5, dr in 0.0f64..0.5) {
            let base = f_score(p, r, 2.0).unwrap();
            prop_assert!(f_score((p + dp).min(1.0), r, 2.0).unwrap() >= base - 1e-15);
            prop_assert!(f_score(p, (r + dr).min(1.0), 2.0).unwrap() >= base - 1e-15);
        }

        #[test]
        fn iou_symmetric(a in prop::collection::vec(any::<bool>(), 25), b in prop::collection::vec(any::<bool>(), 25)) {
            let ma = Mask::from_fn(5, 5, |(r, c)| a[r * 5 + c]);
            let mb = Mask::from_fn(5, 5, |(r, c)| b[r * 5 + c]);
            let v = iou(&ma, &mb).unwrap();
            prop_assert_eq!(v, iou(&mb, &ma).unwrap());
            prop_assert_eq!(v == 1.0, ma == mb);
        }
    }
}
