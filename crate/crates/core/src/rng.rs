//! Seeded random streams.
//!
//! A run has a single master seed. Each consumer (weight init, edge split,
//! per-epoch negative sampling, k-means) derives its own generator from the
//! seed and a stream name, so adding draws in one place never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// 64-bit FNV-1a, stable across platforms and releases.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Generator for the named sub-stream of `seed`.
pub fn stream(seed: u64, name: &str) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(name.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&fnv1a(&[name.as_bytes(), b"#2"].concat()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Generator for the `index`-th instance of a named sub-stream (per epoch, per restart).
pub fn indexed_stream(seed: u64, name: &str, index: u64) -> StreamRng {
    stream(seed, &format!("{name}/{index}"))
}
