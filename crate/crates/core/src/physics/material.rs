use crate::error::{Error, Result};

/// Thermophysical properties of a homogeneous isotropic material.
///
/// The diffusivity is stored redundantly and always equals
/// `conductivity / (density * heat_capacity)` to within 1e-9 relative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaterialProps {
    /// kg/m³
    density: f64,
    /// J/(kg·K)
    heat_capacity: f64,
    /// W/(m·K)
    conductivity: f64,
    /// m²/s
    diffusivity: f64,
}

const DIFFUSIVITY_RTOL: f64 = 1e-9;

impl MaterialProps {
    pub fn new(density: f64, heat_capacity: f64, conductivity: f64) -> Result<Self> {
        for (name, v) in [
            ("density", density),
            ("heat_capacity", heat_capacity),
            ("conductivity", conductivity),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(Self {
            density,
            heat_capacity,
            conductivity,
            diffusivity: conductivity / (density * heat_capacity),
        })
    }

    /// Builds from all four values, rejecting an inconsistent diffusivity.
    pub fn with_diffusivity(
        density: f64,
        heat_capacity: f64,
        conductivity: f64,
        diffusivity: f64,
    ) -> Result<Self> {
        let m = Self::new(density, heat_capacity, conductivity)?;
        if ((diffusivity - m.diffusivity) / m.diffusivity).abs() > DIFFUSIVITY_RTOL {
            return Err(Error::domain(format!(
                "diffusivity {diffusivity} inconsistent with k/(rho*c) = {}",
                m.diffusivity
            )));
        }
        Ok(m)
    }

    /// Representative carbon-fibre reinforced polymer, through-thickness.
    pub fn cfrp() -> Self {
        Self::new(1600.0, 1200.0, 0.8).expect("valid constants")
    }

    /// Still air near room temperature.
    pub fn air() -> Self {
        Self::new(1.2, 1005.0, 0.026).expect("valid constants")
    }

    /// PTFE, the usual material of embedded delamination inserts.
    pub fn ptfe() -> Self {
        Self::new(2200.0, 1000.0, 0.25).expect("valid constants")
    }

    pub fn aluminium() -> Self {
        Self::new(2700.0, 900.0, 237.0).expect("valid constants")
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cfrp" => Some(Self::cfrp()),
            "air" => Some(Self::air()),
            "ptfe" => Some(Self::ptfe()),
            "aluminium" | "aluminum" => Some(Self::aluminium()),
            _ => None,
        }
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn heat_capacity(&self) -> f64 {
        self.heat_capacity
    }

    pub fn conductivity(&self) -> f64 {
        self.conductivity
    }

    pub fn diffusivity(&self) -> f64 {
        self.diffusivity
    }

    /// Volumetric heat capacity ρc, J/(m³·K).
    pub fn volumetric_heat_capacity(&self) -> f64 {
        self.density * self.heat_capacity
    }

    /// Thermal effusivity √(ρck).
    pub fn effusivity(&self) -> f64 {
        (self.density * self.heat_capacity * self.conductivity).sqrt()
    }
}
