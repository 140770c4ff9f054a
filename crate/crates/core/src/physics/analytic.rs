//! Closed-form one-dimensional pulse response of a semi-infinite body.

use std::f64::consts::PI;

use super::MaterialProps;
use crate::error::{Error, Result};

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::domain(format!("time must be finite and > 0, got {t}")));
    }
    Ok(())
}

fn surface_amplitude(mat: &MaterialProps, energy: f64, t: f64) -> f64 {
    energy / (PI * mat.density() * mat.heat_capacity() * mat.conductivity() * t).sqrt()
}

/// Temperature rise at depth `z` a time `t` after an instantaneous surface
/// pulse of `energy` J/m²: `Q/√(πρckt) · exp(−z²/(4αt))`.
pub fn temperature_at_depth(mat: &MaterialProps, energy: f64, z: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(z.is_finite() && z >= 0.0) {
        return Err(Error::domain(format!("depth must be >= 0, got {z}")));
    }
    Ok(surface_amplitude(mat, energy, t) * (-z * z / (4.0 * mat.diffusivity() * t)).exp())
}

/// Surface temperature gap between a region above a defect at depth `d` and
/// sound material: `2Q/√(πρckt) · exp(−d²/(αt))`.
///
/// This is the single-reflection form; higher-order reflections are not
/// summed.
pub fn defect_contrast(mat: &MaterialProps, energy: f64, d: f64, t: f64) -> Result<f64> {
    check_time(t)?;
    if !(d.is_finite() && d >= 0.0) {
        return Err(Error::domain(format!("defect depth must be >= 0, got {d}")));
    }
    Ok(2.0 * surface_amplitude(mat, energy, t) * (-d * d / (mat.diffusivity() * t)).exp())
}

/// Time at which [`defect_contrast`] peaks for a defect at depth `d`:
/// `t* = 2d²/α`.
pub fn peak_contrast_time(mat: &MaterialProps, d: f64) -> Result<f64> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::domain(format!("defect depth must be > 0, got {d}")));
    }
    Ok(2.0 * d * d / mat.diffusivity())
}
