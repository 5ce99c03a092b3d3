//! Seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit
//! value derived from a master seed with a SplitMix64 counter scheme, so a
//! stream depends only on `(master, stream tag, index)` and never on the order
//! in which other streams are consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 output step.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sub-stream `index` of family `tag` from `master`.
pub fn derive(master: u64, tag: u64, index: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(tag));
    splitmix64(a.wrapping_add(index.wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// Stream tags. Distinct constants keep families independent.
pub(crate) const TAG_TREE: u64 = 0x7472_6565;
pub(crate) const TAG_PERMUTE: u64 = 0x7065_726d;
pub(crate) const TAG_BORUTA_FOREST: u64 = 0x6266_6f72;
pub(crate) const TAG_BORUTA_SHADOW: u64 = 0x6273_6864;
pub(crate) const TAG_BORUTA_IMPORTANCE: u64 = 0x6269_6d70;
