//! Pulsed-thermography defect inspection: simulation of thermal sequences,
//! preprocessing, classical contrast enhancement, box-prompt segmentation
//! and evaluation.

pub mod benchmark;
pub mod config;
pub mod dataset;
pub mod enhance;
mod error;
pub mod mask;
pub mod metrics;
pub mod physics;
pub mod promptseg;

pub use error::{Error, Result};
