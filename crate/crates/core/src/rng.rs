//! Seed derivation for independent, reproducible random streams.
//!
//! Every stochastic step takes an explicit RNG. Batch jobs derive one stream
//! per (seed, purpose, index...) tuple so results do not depend on thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags for [`derive_seed`].
pub mod tag {
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const SUB6_NOISE: u64 = 0x5355_4236;
    pub const TRAINING: u64 = 0x5452_4e47;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const TRIAL: u64 = 0x5452_4c53;
    pub const RATIO: u64 = 0x5241_5449;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, path))
}
