//! Deterministic random substreams.
//!
//! Every random stream used by the crate is addressed by a root seed and a short
//! path of integer labels, e.g. `(CHAIN, update, data_index)`. The path is folded
//! into a 64-bit key with the SplitMix64 finaliser, the key is expanded into a
//! 256-bit ChaCha8 seed, and the resulting generator is independent of which
//! thread asks for it or in what order. Parallel and serial runs therefore see
//! exactly the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Labels for the first path element, one per consumer.
pub mod tags {
    pub const DATA: u64 = 0x01;
    pub const RUN: u64 = 0x02;
    pub const CHAIN: u64 = 0x03;
    pub const BATCH: u64 = 0x04;
    pub const ALPHA: u64 = 0x05;
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `path` into `root`. Position matters: `[a, b]` and `[b, a]` differ.
pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    let mut h = mix64(root ^ GOLDEN);
    for (depth, &label) in path.iter().enumerate() {
        let salt = GOLDEN.wrapping_mul(depth as u64 + 1);
        h = mix64(h.wrapping_add(salt) ^ mix64(label.wrapping_add(GOLDEN)));
    }
    h
}

pub fn substream(root: u64, path: &[u64]) -> StreamRng {
    let mut state = derive_seed(root, path);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        state = state.wrapping_add(GOLDEN);
        chunk.copy_from_slice(&mix64(state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
