//! Seeded randomness.
//!
//! All randomness goes through [`Rng`], which is ChaCha8 (`rand_chacha`).
//! Independent streams are derived with [`mix`], a SplitMix64 finalizer over
//! the global seed and a pair of counters, so e.g. the neighbor sampled for
//! vertex `i` at embedding iteration `t` can be regenerated on demand.

use rand::SeedableRng;

pub type Rng = rand_chacha::ChaCha8Rng;

/// Name recorded in checkpoints and configs.
pub const RNG_ALGORITHM: &str = "chacha8";

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based seed derivation: a stable function of `(seed, a, b)`.
pub fn mix(seed: u64, a: u64, b: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ a) ^ b.rotate_left(32))
}

/// Uniform index in `0..n` from a derived stream, without building a full rng.
pub fn mixed_index(seed: u64, a: u64, b: u64, n: usize) -> usize {
    debug_assert!(n > 0);
    // 128-bit multiply-shift keeps the result unbiased enough for n << 2^64.
    ((mix(seed, a, b) as u128 * n as u128) >> 64) as usize
}
