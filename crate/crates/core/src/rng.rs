//! Counter-based seed derivation.
//!
//! A single base seed fans out into independent ChaCha streams addressed by
//! `(base, stream, index)`. The same triple always yields the same stream, so
//! a replica can be reproduced in isolation without replaying its siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the ensemble runners.
pub mod streams {
    pub const NETWORK: u64 = 1;
    pub const THRESHOLDS: u64 = 2;
    pub const SEED_AGENT: u64 = 3;
    pub const GRID_POINT: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix `(base, stream, index)` into a 64-bit seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let a = splitmix64(base);
    let b = splitmix64(a ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(b ^ index.wrapping_mul(0xA076_1D64_78BD_642F))
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    seeded_rng(derive_seed(base, stream, index))
}
