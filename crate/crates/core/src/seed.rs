//! Deterministic seed derivation.
//!
//! Every stochastic component receives its own 64-bit seed derived from a
//! parent seed and a stream label, so that stages stay reproducible in
//! isolation: `derive(parent, label) = splitmix64(parent ^ fnv1a(label))`,
//! and indexed sub-streams use `derive_index(parent, i) = splitmix64(parent
//! + (i + 1) * 0x9E3779B97F4A7C15)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed for the named stream under `parent`.
pub fn derive(parent: u64, label: &str) -> u64 {
    splitmix64(parent ^ fnv1a(label))
}

/// Seed for the `index`-th stream under `parent`.
pub fn derive_index(parent: u64, index: u64) -> u64 {
    splitmix64(parent.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_differ() {
        assert_ne!(derive(1, "augment"), derive(1, "train"));
        assert_ne!(derive_index(7, 0), derive_index(7, 1));
        assert_eq!(derive(42, "synth"), derive(42, "synth"));
    }
}
