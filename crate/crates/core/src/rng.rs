//! Seed derivation for independent, reproducible random streams.
//!
//! Every consumer of randomness (a vessel branch, a bubble, a noise frame)
//! gets its own generator seeded from a key derived from its parent key and a
//! tag. Adding or removing a sibling therefore never shifts another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child key for `tag` under `parent`.
pub fn derive(parent: u64, tag: u64) -> u64 {
    mix64(mix64(parent) ^ tag.rotate_left(17) ^ 0xA076_1D64_78BD_642F)
}

/// Seed for a named pipeline stage, hashed from the master seed.
///
/// Masked to 63 bits so it survives as a TOML integer.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes) & (u64::MAX >> 1)
}

pub fn stream(key: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(key)
}
