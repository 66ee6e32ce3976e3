//! Counter-based RNG streams.
//!
//! All randomness in the crate flows from a `u64` seed through ChaCha8
//! streams addressed by `(lane, index)`. A batch of S samples uses streams
//! `(lane, 0..S)`, so samples can be generated in any order and in parallel
//! while staying bit-identical to a sequential run.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream lanes keep independent uses of the same seed from colliding.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Lane {
    ExactDraw = 0,
    GibbsChain = 1,
    Omega = 2,
    ParamInit = 3,
    PerceptronShuffle = 4,
    GaussianBank = 5,
    ClassSelect = 6,
    Split = 7,
    Synthetic = 8,
}

/// RNG for stream `index` of `lane`, rooted at `seed`.
pub fn stream(seed: u64, lane: Lane, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((lane as u64) << 40) ^ index);
    rng
}

/// Derives a child seed, used for per-epoch and per-grid-point seeding.
pub fn mix(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut x = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}
