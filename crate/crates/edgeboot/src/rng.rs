//! Counter-based stream derivation for reproducible parallel Monte Carlo.
//!
//! Every replicate (or block) gets its own generator seeded from
//! `mix(master_seed, stream_index)`, so results are bit-identical no matter
//! how replicates are distributed over workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// splitmix64 finalizer; decorrelates nearby (seed, stream) pairs.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a stream seed from a master seed and a stream index.
pub fn mix(master_seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(master_seed) ^ splitmix64(stream.wrapping_mul(0xa076_1d64_78bd_642f)))
}

/// Generator for stream `stream` of the experiment seeded by `master_seed`.
pub fn stream_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(master_seed, stream))
}
