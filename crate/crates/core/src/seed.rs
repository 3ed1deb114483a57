//! Deterministic seed derivation. Every random stream in a run is derived from
//! the run seed plus a stream label, so streams never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream type used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over a label; stable across platforms and toolchains.
pub fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

pub fn derive(parent: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(parent ^ label_hash(label)).wrapping_add(index))
}

pub fn rng_from(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(parent: u64, label: &str, index: u64) -> SimRng {
    rng_from(derive(parent, label, index))
}
