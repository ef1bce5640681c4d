//! Seeded random streams.
//!
//! Every consumer derives its own ChaCha stream from `(seed, path)`, where the
//! path names the consumer (experiment, repetition, task, ...). Streams never
//! share state, so results do not depend on evaluation order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Path tags keeping streams of different consumers apart.
pub mod tag {
    pub const SPLIT: u64 = 1;
    pub const MEDIAN: u64 = 2;
    pub const CV_FOLDS: u64 = 3;
    pub const DG_PARAMS: u64 = 10;
    pub const DG_SAMPLE: u64 = 11;
    pub const THREE_NODE: u64 = 12;
    pub const EXPERIMENT: u64 = 20;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let stream_id = path
        .iter()
        .fold(0x51_7CC1_B727_220A_u64, |acc, &p| splitmix(acc ^ splitmix(p)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// A fresh 64-bit seed for the consumer at `path`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    stream(seed, path).next_u64()
}
