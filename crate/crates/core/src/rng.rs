//! Deterministic per-sample random streams.
//!
//! Every random draw in a generation run comes from a stream keyed by
//! `(master seed, sample index, stage)`. The streams are ChaCha8 instances:
//! the master seed fixes the key, the `(index, stage)` pair selects the
//! 64-bit stream id, and sub-streams for parallel chunks are carved out of
//! the block counter. Nothing depends on which worker draws first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Pipeline stage a stream belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Stage {
    Spatial = 1,
    Partition = 2,
    Gmm = 3,
    Render = 4,
    Corrupt = 5,
    Resolution = 6,
    Relaxometry = 7,
    Sequence = 8,
    Profile = 9,
}

/// Largest sample index that maps to a distinct stream id.
pub const MAX_SAMPLE_INDEX: u64 = (1 << 56) - 1;

// words reserved per chunk sub-stream (2^36 u32 words)
const CHUNK_WORDS_LOG2: u32 = 36;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub sample_index: u64,
    pub stage: Stage,
}

impl RngStream {
    pub fn new(master_seed: u64, sample_index: u64, stage: Stage) -> Self {
        assert!(
            sample_index <= MAX_SAMPLE_INDEX,
            "sample index {sample_index} exceeds the stream id space"
        );
        Self {
            master_seed,
            sample_index,
            stage,
        }
    }

    fn stream_id(&self) -> u64 {
        (self.sample_index << 8) | self.stage as u64
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id());
        rng
    }

    /// Independent sub-stream for chunk `chunk` of a parallel fill.
    pub fn chunk_rng(&self, chunk: u32) -> ChaCha8Rng {
        let mut rng = self.rng();
        rng.set_word_pos((chunk as u128 + 1) << CHUNK_WORDS_LOG2);
        rng
    }
}
