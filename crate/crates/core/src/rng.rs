//! Seed plumbing. Every random stream in the crate is a `ChaCha8Rng` seeded
//! from a `u64` so runs are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from `base` for a named stream and index.
/// SplitMix64 finalizer over the mixed inputs.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) mod stream {
    pub const TRAIN_EPISODE: u64 = 1;
    pub const TRAIN_EXPLORATION: u64 = 2;
    pub const TRAIN_INIT: u64 = 3;
    pub const EVAL_EPISODE: u64 = 4;
    pub const EVAL_CONTROLLER: u64 = 5;
}
