//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! stream addressed by `(seed, index)`, so results never depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for unit `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for a labelled sub-experiment, via the SplitMix64 finalizer.
pub fn derive_seed(seed: u64, label: u64, index: u64) -> u64 {
    let mut z = seed
        ^ label.wrapping_mul(0xD1B5_4A32_D192_ED03)
        ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
