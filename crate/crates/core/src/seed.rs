//! Seed streams. Every stochastic component draws from its own ChaCha8
//! generator whose seed is derived from one root seed, so a whole run is
//! reproduced from a single integer.
//!
//! `split(root, stream)` is two rounds of SplitMix64 over `root` and the
//! stream tag; nested streams (e.g. per-cycle, per-worker) apply `split`
//! again.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const ASSIGNER: u64 = 1;
pub const PRIORITY: u64 = 2;
pub const LNS: u64 = 3;
pub const RANDOM_K: u64 = 4;
pub const INSTANCE: u64 = 5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn split(root: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(root) ^ stream.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn rng(root: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(split(root, stream))
}
