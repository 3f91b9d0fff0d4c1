//! Recommender-driven algorithm selection.
//!
//! Treats a knowledge base of `(dataset, configuration, score)` results as a
//! rating matrix and recommends which algorithm configuration to run next on
//! a dataset. The crate is `no_std` (it needs `alloc`); file formats, the
//! command line and the HTTP service live in the `algorec` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod harness;
pub mod kb;
pub mod math;
pub mod metafeatures;
pub mod recommenders;

pub use error::{Error, Result};

/// The RNG used everywhere randomness is consumed. Every stream is seeded
/// explicitly so runs reproduce exactly.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Derives an independent, reproducible RNG stream from a base seed and a
/// stream label (trial index, substream name hash, ...).
pub fn substream(seed: u64, stream: u64) -> Rng {
    use rand::SeedableRng;
    // splitmix64 finalizer over the pair keeps nearby seeds decorrelated
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    Rng::seed_from_u64(z)
}

/// Stable 64-bit FNV-1a hash, used to name RNG substreams by string.
pub fn stream_id(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
