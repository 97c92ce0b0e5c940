//! Named, independent random streams.
//!
//! Every stochastic component draws from its own ChaCha8 stream derived from
//! `(seed, stream)`. Changing how many numbers one component consumes never
//! perturbs another, so e.g. a different spectral seed leaves the transition
//! tensor untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The stream a random draw belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    WorldInit,
    WorldDynamics,
    Policy,
    Kmeans,
    Spectral,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::WorldInit => 0x5749_4e49,
            Stream::WorldDynamics => 0x5744_594e,
            Stream::Policy => 0x504f_4c49,
            Stream::Kmeans => 0x4b4d_4e53,
            Stream::Spectral => 0x5350_4543,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(mix64(seed) ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream.tag()))
}
