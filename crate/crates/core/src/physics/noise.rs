//! Counter-keyed Gaussian noise.
//!
//! Every sample is addressed by `(stream, index)` rather than drawn from a
//! shared sequential generator, so the value at a pixel does not depend on
//! evaluation order or on how work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Words reserved per sample; the normal sampler occasionally rejects and
/// draws again.
const WORDS_PER_SAMPLE: u128 = 64;

/// Stream used for the static fixed-pattern offset; frame noise uses the
/// frame index as stream.
pub const FIXED_PATTERN_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug)]
pub struct KeyedNormal {
    seed: u64,
}

impl KeyedNormal {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn sample(&self, stream: u64, index: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng.set_word_pos(index as u128 * WORDS_PER_SAMPLE);
        rng.sample(StandardNormal)
    }
}
