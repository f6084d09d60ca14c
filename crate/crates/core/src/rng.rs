//! Seeding. Every generator in the crate is a `ChaCha8Rng` seeded from a
//! master seed, optionally mixed with a stream id (for example a flat domain
//! index) through [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable child seed: `splitmix(splitmix(master) ^ (stream + 1)·φ64)`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_rng(master: u64, stream: u64) -> Rng {
    rng(derive_seed(master, stream))
}

/// Stream ids for the distinct uses of a master seed.
pub mod stream {
    pub const MODEL: u64 = 1 << 40;
    pub const TRAIN_DATA: u64 = 2 << 40;
    pub const TEST_DATA: u64 = 3 << 40;
    pub const MASK: u64 = 4 << 40;
    pub const INIT: u64 = 5 << 40;
    pub const BATCH: u64 = 6 << 40;
    pub const COMPLETION: u64 = 7 << 40;
    pub const BASE: u64 = 8 << 40;
    pub const EVAL: u64 = 9 << 40;
}
