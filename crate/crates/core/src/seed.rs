//! Deterministic seed splitting.
//!
//! `child = u64::from_le_bytes(SHA-256(global.to_le_bytes() || name || index.to_le_bytes())[0..8])`
//!
//! Every randomized component derives its seed from the global seed through this
//! rule, so a single integer reproduces a whole run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn child_seed(global: u64, name: &str, index: u64) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global.to_le_bytes());
    hasher.update(name.as_bytes());
    hasher.update(index.to_le_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
