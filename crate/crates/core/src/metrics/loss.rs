//! Hybrid binary cross-entropy plus Dice loss, with its analytic gradient.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Predictions are clamped to `[EPS, 1 - EPS]` before any logarithm.
pub const EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BceForm {
    /// `-(1/N) Σ [y ln p + (1 - y) ln(1 - p)]`
    #[default]
    Full,
    /// Positive term only: `-(1/N) Σ y ln p`.
    PositiveOnly,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

fn check(y: &Array2<f64>, yhat: &Array2<f64>) -> Result<()> {
    if y.dim() != yhat.dim() {
        return Err(Error::shape(format!("{:?}", y.dim()), format!("{:?}", yhat.dim())));
    }
    if y.is_empty() {
        return Err(Error::domain("loss over an empty map"));
    }
    if let Some(v) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::domain(format!("target values must be 0 or 1, got {v}")));
    }
    if let Some(v) = yhat.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::domain(format!("predictions must lie in [0, 1], got {v}")));
    }
    Ok(())
}

fn clamp(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

/// `L = L_BCE + beta * L_Dice` with `L_Dice = 1 - 2Σyp / (Σy² + Σp²)`.
pub fn hybrid_loss(y: &Array2<f64>, yhat: &Array2<f64>, beta: f64, form: BceForm) -> Result<LossValues> {
    check(y, yhat)?;
    let n = y.len() as f64;
    let (mut bce, mut s, mut a, mut b) = (0.0, 0.0, 0.0, 0.0);
    for (&t, &raw) in y.iter().zip(yhat.iter()) {
        let p = clamp(raw);
        bce -= t * p.ln();
        if form == BceForm::Full {
            bce -= (1.0 - t) * (1.0 - p).ln();
        }
        s += t * p;
        a += t * t;
        b += p * p;
    }
    let bce = bce / n;
    let dice = 1.0 - 2.0 * s / (a + b);
    Ok(LossValues { bce, dice, total: bce + beta * dice })
}

/// `∂L/∂ŷ`, evaluated at the clamped predictions.
pub fn hybrid_loss_grad(y: &Array2<f64>, yhat: &Array2<f64>, beta: f64, form: BceForm) -> Result<Array2<f64>> {
    check(y, yhat)?;
    let n = y.len() as f64;
    let (mut s, mut a, mut b) = (0.0, 0.0, 0.0);
    for (&t, &raw) in y.iter().zip(yhat.iter()) {
        let p = clamp(raw);
        s += t * p;
        a += t * t;
        b += p * p;
    }
    let d = a + b;
    let mut g = Array2::zeros(y.dim());
    ndarray::Zip::from(&mut g).and(y).and(yhat).for_each(|g, &t, &raw| {
        let p = clamp(raw);
        let mut gb = -t / p;
        if form == BceForm::Full {
            gb += (1.0 - t) / (1.0 - p);
        }
        let gd = -2.0 * (t * d - 2.0 * s * p) / (d * d);
        *g = gb / n + beta * gd;
    });
    Ok(g)
}
