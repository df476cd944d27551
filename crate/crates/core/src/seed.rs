//! Derivation of every random stream from a single root seed.
//!
//! A stream seed is `mix(mix(mix(root) ^ iteration) ^ stream)` where `mix` is
//! the SplitMix64 finalizer. Stream 0 of an iteration drives candidate
//! sampling; stream `1 + c` is the evaluation seed of candidate `c`. Because
//! seeds depend only on (root, iteration, candidate), local and distributed
//! runs see identical randomness regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(root: u64, iteration: usize, stream: u64) -> u64 {
    mix(mix(mix(root) ^ iteration as u64) ^ stream)
}

pub fn sampling_seed(root: u64, iteration: usize) -> u64 {
    stream_seed(root, iteration, 0)
}

pub fn candidate_seed(root: u64, iteration: usize, candidate: usize) -> u64 {
    stream_seed(root, iteration, 1 + candidate as u64)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
