//! Deterministic random substreams.
//!
//! A [`SeedStream`] keys a ChaCha8 generator: the root seed fixes the key and
//! the trajectory ordinal selects the ChaCha stream, so distinct pairs give
//! non-overlapping keystreams. Within a stream, draws are addressed by block
//! so a consumer can jump to, e.g., the noise of time step `n` without
//! replaying earlier steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Words (u32) reserved per addressable block.
const BLOCK_WORDS: u128 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedStream {
    pub root_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedStream {
    pub fn new(root_seed: u64, stream_index: u64) -> Self {
        SeedStream {
            root_seed,
            stream_index,
        }
    }

    /// Generator positioned at the start of the stream.
    pub fn rng(&self) -> ChaCha8Rng {
        self.block_rng(0)
    }

    /// Generator positioned at the start of block `block`.
    pub fn block_rng(&self, block: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.root_seed);
        rng.set_stream(self.stream_index);
        rng.set_word_pos(block as u128 * BLOCK_WORDS);
        rng
    }

    /// An independent family of streams sharing this stream's ordinal; used
    /// when one trajectory needs several independent Gaussian inputs.
    pub fn lane(&self, lane: u64) -> SeedStream {
        SeedStream {
            root_seed: splitmix64(self.root_seed ^ splitmix64(lane.wrapping_add(0x5eed))),
            stream_index: self.stream_index,
        }
    }
}

/// Fill `out` with independent standard normals drawn from `rng`.
pub fn fill_normal<R: rand::Rng>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = StandardNormal.sample(rng);
    }
}
