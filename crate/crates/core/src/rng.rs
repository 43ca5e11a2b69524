//! Deterministic seed derivation.
//!
//! Every random stream in the crate is a ChaCha8 generator seeded from a
//! `u64` obtained by hashing a parent seed with an index, so replicates,
//! variables and simulation iterations draw from independent, reproducible
//! streams regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SynthRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(index.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

pub fn stream(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn child_stream(parent: u64, index: u64) -> SynthRng {
    stream(derive_seed(parent, index))
}
