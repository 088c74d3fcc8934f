//! Deterministic random streams.
//!
//! Every stochastic choice in training draws from a stream keyed by the run seed plus a tag
//! path (purpose, epoch, example index, ...). Streams never share state, so skipping one
//! mechanism cannot shift the draws seen by another, and per-example work is order-independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit tag for a purpose label.
pub const fn tag(label: &str) -> u64 {
    // FNV-1a
    let bytes = label.as_bytes();
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
        i += 1;
    }
    hash
}

/// Fold a tag path into a 64-bit seed, for callers that derive further streams from it.
pub fn stream_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = splitmix64(seed);
    for &part in path {
        state = splitmix64(state ^ splitmix64(part));
    }
    state
}

/// Derive an independent stream from `seed` and a path of tags.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, path))
}
