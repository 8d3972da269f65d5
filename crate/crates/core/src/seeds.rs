//! Deterministic seed derivation.
//!
//! Every random decision in the laboratory flows from a single master
//! seed through [`mix`], so runs are reproducible regardless of worker
//! count or scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer. Stable across platforms and releases.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Fold a master seed and a sequence of stream labels into one seed.
pub fn mix(master: u64, labels: &[u64]) -> u64 {
    let mut acc = splitmix64(master);
    for &label in labels {
        acc = splitmix64(acc ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    }
    acc
}

/// A ChaCha stream for the given master seed and labels.
pub fn rng_for(master: u64, labels: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(master, labels))
}

/// Stream labels used throughout the crate, kept in one place so
/// distinct subsystems never collide on the same derived stream.
pub mod stream {
    pub const FAMILY: u64 = 0x01;
    pub const SAMPLE: u64 = 0x02;
    pub const ANALYSIS: u64 = 0x03;
    pub const SPLIT: u64 = 0x04;
    pub const SVM: u64 = 0x05;
}
