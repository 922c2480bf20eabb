//! Deterministic random streams.
//!
//! Every random draw is taken from a ChaCha8 stream keyed by the master seed
//! and selected by `stream_id`. ChaCha is counter based, so streams are
//! independent and a stream's output does not depend on which thread or in
//! what order it is consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    #[serde(default)]
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same master seed, a different stream selected by `id`.
    pub fn with_stream(&self, id: u64) -> Self {
        Self::new(self.master_seed, id)
    }

    /// A child stream identified by `tag`, distinct from this stream and from
    /// children with other tags.
    pub fn derive(&self, tag: u64) -> Self {
        let mixed = splitmix64(splitmix64(self.stream_id ^ 0x6a09_e667_f3bc_c908) ^ tag);
        Self::new(self.master_seed, mixed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
