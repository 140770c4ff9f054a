//! Forward models of pulsed thermography: the closed-form semi-infinite
//! response and a 3-D finite-volume simulator that produces synthetic
//! sequences with ground truth.

mod analytic;
pub mod fd;
mod material;
pub mod noise;
mod scene;
mod simulate;

pub use analytic::{defect_contrast, peak_contrast_time, temperature_at_depth};
pub use material::MaterialProps;
pub use scene::{DefectShape, DefectSpec, Illumination, NoiseModel, PulseSpec, SimScene};
pub use simulate::{simulate_sequence, Simulation};
