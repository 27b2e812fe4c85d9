//! Keyed random streams.
//!
//! Every particle owns a generator derived from `(experiment seed, replica, lineage)`, where
//! the lineage hash of a child is a mix of its parent's hash and its child index. Results
//! therefore do not depend on the order in which particles or replicas are processed.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type StreamRng = Xoshiro256PlusPlus;

/// Lineage hash of the initial particle.
pub const ROOT_LINEAGE: u64 = 0x6a09_e667_f3bc_c908;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of two keys.
#[inline]
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(a ^ splitmix(b).rotate_left(17))
}

#[inline]
pub fn child_lineage(parent: u64, child_index: u64) -> u64 {
    mix(parent, child_index.wrapping_add(1))
}

/// Generator for one particle of one replica.
#[inline]
pub fn stream(seed: u64, replica: u64, lineage: u64) -> StreamRng {
    StreamRng::seed_from_u64(mix(mix(seed, replica), lineage))
}

/// Generator for an auxiliary task identified by a label and an index.
pub fn task_stream(seed: u64, label: &str, index: u64) -> StreamRng {
    let tag = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x1000_0000_01b3));
    StreamRng::seed_from_u64(mix(mix(seed, tag), index))
}
