//! Per-replica random streams derived from one root seed.
//!
//! Stream `k` is seeded from a SplitMix64 hash of `(root, k)`, so a replica's
//! draws never depend on which worker runs it or in what order.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

const STREAM_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// The generator used for every simulated replica.
pub type StreamRng = Xoshiro256PlusPlus;

/// Seed for stream `stream` under `root`.
pub fn derive_seed(root: u64, stream: u64) -> u64 {
    let mut sm = SplitMix64::seed_from_u64(root ^ stream.wrapping_add(1).wrapping_mul(STREAM_STRIDE));
    // Two rounds so adjacent (root, stream) pairs decorrelate fully.
    sm.next_u64();
    sm.next_u64()
}

pub fn stream(root: u64, stream: u64) -> StreamRng {
    Xoshiro256PlusPlus::seed_from_u64(derive_seed(root, stream))
}
