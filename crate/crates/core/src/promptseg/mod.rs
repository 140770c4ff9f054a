//! Box-prompt defect segmentation.
//!
//! An expert (or the evaluation harness) supplies one box per suspected
//! defect; each box yields one instance mask. Inside a slightly expanded box
//! the contrast image is thresholded with Otsu's method, a region is grown
//! from the brightest pixel of the box, and the region is cleaned with a 3×3
//! opening and closing.

mod fuse;
mod morphology;
mod otsu;
mod prompt;
mod segment;

pub use fuse::fuse_annotations;
pub use otsu::otsu_threshold;
pub use prompt::{expand_rect, format_prompts, parse_prompts, prompts_from_ground_truth, BoxPrompt};
pub use segment::{
    segment_with_prompts, PromptResult, PromptStatus, SegmentParams, SegmentationResult, DEFAULT_MARGIN,
};
