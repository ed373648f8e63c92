//! Seeded random streams.
//!
//! Every random decision in the crate draws from a ChaCha stream derived from
//! the user seed and a fixed stream id, so separate concerns (initialization,
//! splitting, shuffling) never perturb one another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Split = 2,
    Shuffle = 3,
    NegativeSampling = 4,
    Synthetic = 5,
    Test = 6,
}

pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
