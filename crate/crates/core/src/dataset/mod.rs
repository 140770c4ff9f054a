//! Thermal sequences, frame sampling, residual-heat correction, resizing,
//! dataset splits and the on-disk formats.

pub mod pgm;
mod resize;
mod sampling;
mod sequence;
mod split;
mod store;

pub use resize::resize_frame;
pub use sampling::{frame_budget, residual_heat_correct, sample_frames, ResidualCorrected, SamplingConfig};
pub use sequence::{GroundTruth, SampleTag, Source, SystemTag, ThermalSequence};
pub use split::{kfold, split_dataset, Split, SplitPlan, SplitRatios};
pub use store::{SequenceMeta, SequenceStore};
