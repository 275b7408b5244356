//! Deterministic seed streams.
//!
//! Every random quantity is drawn from a `ChaCha8Rng` seeded by
//! [`derive_seed`] from a master seed and a path of integer tags, so a
//! replicate's randomness depends only on its position, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `master` at the position named by `tags`.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ 0x6A09_E667_F3BC_C908);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x3C6E_F372_FE94_F82B)));
    }
    h
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
