//! Seed derivation. Every stochastic operation takes an explicit u64 seed;
//! nested streams are derived by hashing the parent seed with a label so that
//! permuting execution order cannot change any stream.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive a child seed from a parent seed and a label path.
pub fn derive_seed(parent: u64, labels: &[&str]) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(parent.to_le_bytes());
    for label in labels {
        hasher.update([0xff]);
        hasher.update(label.as_bytes());
    }
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

/// Derive a child seed keyed by an index (trial number, replicate number, ...).
pub fn derive_seed_indexed(parent: u64, label: &str, index: u64) -> u64 {
    derive_seed(parent, &[label, &index.to_string()])
}

/// The RNG used throughout; seeded ChaCha so streams are portable and stable.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
