//! Seeded random streams.
//!
//! Every run or path gets its own xoshiro256++ generator whose 64-bit seed is
//! a SplitMix64 hash of `(master seed, stream index)`. Results therefore do not
//! depend on how work is scheduled across threads.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SimRng = Xoshiro256PlusPlus;

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of stream `index` under master seed `seed`.
pub fn stream_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Independent generator for stream `index`.
pub fn stream_rng(seed: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(stream_seed(seed, index))
}
