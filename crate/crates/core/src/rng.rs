//! Seeded randomness. All stochastic components take an explicit seed or
//! generator so callers own determinism; sub-streams are derived by mixing
//! rather than sharing a generator.

use rand::SeedableRng;

/// The generator used throughout. ChaCha keeps streams reproducible across
/// platforms and releases.
pub type Rng = rand_chacha::ChaCha12Rng;

pub fn rng_from(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed from a master seed, a purpose tag and an
/// index, using two rounds of the splitmix64 finalizer.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    mix(mix(master ^ mix(tag)) ^ index)
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Purpose tags for [`derive_seed`].
pub mod tags {
    pub const SCENARIO: u64 = 1;
    pub const EPISODE: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const NET_INIT: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const SWEEP: u64 = 6;
}
