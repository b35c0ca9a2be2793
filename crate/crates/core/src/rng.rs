//! Deterministic RNG streams.
//!
//! Every random decision in the crate draws from a stream keyed by a seed and a
//! short tuple of integers (domain tag, episode id, step, ...). Streams never
//! share state, so results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags separating independent uses of the same seed.
pub mod domain {
    pub const EPISODE: u64 = 0x01;
    pub const CONFUSION: u64 = 0x02;
    pub const ORACLE: u64 = 0x03;
    pub const PASS_RATE: u64 = 0x04;
    pub const SIMILARITY: u64 = 0x05;
    pub const SHUFFLE: u64 = 0x06;
    pub const ROLLOUT: u64 = 0x07;
    pub const QUERY_COUNT: u64 = 0x08;
    pub const INIT: u64 = 0x09;
    pub const GRADCHECK: u64 = 0x0a;
    pub const EVAL: u64 = 0x0b;
    pub const PRETRAIN: u64 = 0x0c;
    pub const JOINT: u64 = 0x0d;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a seed and key tuple into a single 64-bit stream key.
pub fn mix(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Independent ChaCha8 stream for `(seed, parts)`.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, parts))
}
