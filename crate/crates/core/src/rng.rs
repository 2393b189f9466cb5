//! Deterministic seed splitting. Every consumer of randomness derives its own
//! stream from the run seed plus a label, so adding a consumer never shifts
//! another consumer's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a sub-seed from a parent seed, a label and any number of integer keys.
pub fn derive_seed(seed: u64, label: &str, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(mix(seed ^ label_hash(label)), |acc, &k| mix(acc ^ mix(k)))
}

pub fn stream(seed: u64, label: &str, keys: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label, keys))
}
