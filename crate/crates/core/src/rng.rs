//! Seedable RNG streams with deterministic splitting.
//!
//! Every randomized site (a measurement, a shot, a combination event) draws
//! from a child stream derived from the master seed and a label path, so runs
//! are reproducible bit-exactly and independent of execution order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; good avalanche, cheap.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of the child stream identified by `path` under `seed`.
pub fn child_seed(seed: u64, path: &[u64]) -> u64 {
    let mut s = mix(seed);
    for &p in path {
        s = mix(s ^ mix(p));
    }
    s
}

/// One child generator per site: `stream(seed, &[shot])`, `stream(seed, &[shot, site])`, ...
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, path))
}

/// Master stream for a run.
pub fn master(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
