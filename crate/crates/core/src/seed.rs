//! Counter-based seed derivation.
//!
//! Every random stream in a federation run is derived from the master seed
//! by hashing `(master, stream, participant)` through SplitMix64. Adding a
//! participant therefore never shifts the randomness of the others, and no
//! stream depends on the order in which phases happen to execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams. The discriminants are part of the reproducibility
/// contract; do not renumber.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Taxonomy = 1,
    Pool = 2,
    Partition = 3,
    TestSet = 4,
    Unlabeled = 5,
    LocalTraining = 6,
    UpdateTraining = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, stream: Stream, participant: u64) -> u64 {
    let a = splitmix64(master ^ splitmix64(stream as u64));
    splitmix64(a ^ splitmix64(participant.wrapping_mul(GOLDEN).wrapping_add(1)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
