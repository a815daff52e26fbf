//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is keyed by a path of integers
//! (trial index, stream tag, robot index, ...) hashed together with the
//! master seed through SplitMix64. Streams never depend on scheduling, so
//! results are identical for any number of workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &tag| splitmix64(acc ^ splitmix64(tag)))
}

pub fn stream(master: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, path))
}

/// Stream tags.
pub mod tag {
    pub const ENVIRONMENT: u64 = 1;
    pub const EVIDENCE: u64 = 2;
    pub const ATTACK: u64 = 3;
    pub const COMM_FIELD: u64 = 4;
    pub const MEETINGS: u64 = 5;
    pub const CONSENSUS: u64 = 6;
    pub const COMM_EVAL: u64 = 7;
    pub const COMPROMISED: u64 = 8;
    pub const KERNEL: u64 = 9;
}
