//! Counter-based seed derivation.
//!
//! Every random stream in the crate (trees, bootstrap replicates, Monte Carlo
//! replicates) is seeded from `(master, stream, index)` so results never
//! depend on scheduling order or the number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags keep unrelated consumers of one master seed apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Tree = 1,
    Bootstrap = 2,
    Replicate = 3,
    Calibration = 4,
    Truth = 5,
    Assignment = 6,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, stream: Stream, index: u64) -> u64 {
    let a = splitmix64(master ^ (stream as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    splitmix64(a ^ splitmix64(index))
}

pub fn stream_rng(master: u64, stream: Stream, index: u64) -> Rng {
    Rng::seed_from_u64(derive_seed(master, stream, index))
}
