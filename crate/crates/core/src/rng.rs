//! Seeded random number generation.
//!
//! Every random draw in the crate goes through [`Rng64`], a ChaCha8 stream
//! cipher generator. ChaCha output is specified bit-for-bit, so a given seed
//! yields the same sequence on every platform. Independent sub-streams are
//! derived from a run seed and a purpose tag with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Rng64 = ChaCha8Rng;

/// Creates a generator from a 64-bit seed.
pub fn seeded(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed for a named purpose, e.g. `derive_seed(seed, "init", k)`.
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut h = mix64(seed);
    for b in tag.bytes() {
        h = mix64(h ^ u64::from(b));
    }
    mix64(h ^ index)
}

pub fn normal(rng: &mut Rng64) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform01(rng: &mut Rng64) -> f64 {
    rng.random::<f64>()
}

/// Uniform integer in `0..n`. `n` must be positive.
pub fn index(rng: &mut Rng64, n: usize) -> usize {
    rng.random_range(0..n)
}
