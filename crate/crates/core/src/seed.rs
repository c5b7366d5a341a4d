//! Seed derivation. Every random stream in a run is a ChaCha8 generator
//! seeded from the run seed mixed with a purpose tag and indices through
//! SplitMix64, so streams are reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const TAG_CLASSIFIER_INIT: u64 = 1;
pub const TAG_GENERATOR_INIT: u64 = 2;
pub const TAG_SHUFFLE: u64 = 3;
pub const TAG_DROPOUT: u64 = 4;
pub const TAG_DATASET: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, parts: &[u64]) -> Rng {
    rng(derive(base, parts))
}
