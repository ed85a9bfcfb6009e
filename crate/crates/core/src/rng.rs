//! Seeded random streams.
//!
//! Every generator is a ChaCha8 stream keyed by a 64-bit seed. Replicas of an
//! experiment share the key and differ in the stream index, so results do not
//! depend on which thread runs which replica.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed of replica `index` under `master_seed`.
pub fn replica_seed(master_seed: u64, index: u64) -> u64 {
    stream_rng(master_seed, index).next_u64()
}

/// Stream used to sample interactions of a run.
pub const DYNAMICS_STREAM: u64 = 0;
/// Stream used to sample initial configurations.
pub const INIT_STREAM: u64 = 1;
