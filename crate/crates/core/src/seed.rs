//! Deterministic seed derivation.
//!
//! Every source of randomness in this crate is a [`ChaCha8Rng`] seeded through
//! [`derive_seed`], so a single master seed reproduces an entire experiment,
//! and independent streams (repetitions, aggregation runs, sub-draws) never
//! share generator state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer step.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a master seed and a stream index.
///
/// The map is a fixed splittable hash: children of the same master with
/// different stream indices are decorrelated, and the whole tree is
/// reproducible across platforms.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(stream ^ 0x243F_6A88_85A3_08D3))
}

/// Instantiate the crate-wide RNG for a seed.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
