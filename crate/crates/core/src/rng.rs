//! Seeded randomness shared by every stochastic step of the pipeline.
//!
//! All streams are SplitMix64 (Steele, Lea & Flood 2014): a 64-bit state
//! advanced by the golden-ratio increment `0x9E3779B97F4A7C15` and passed
//! through the `mix64` finalizer. The algorithm is small and fully specified,
//! so splits and batch plans can be reproduced outside this crate.
//!
//! Shuffles use the descending Fisher–Yates variant with `j = next_u64() % (i + 1)`.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub type Rng = SplitMix64;

pub fn seeded(seed: u64) -> Rng {
    SplitMix64::seed_from_u64(seed)
}

/// Derives an independent seed for a named sub-stream (a run, an epoch, a bootstrap iteration).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn shuffle<T>(items: &mut [T], rng: &mut Rng) {
    for i in (1..items.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}
