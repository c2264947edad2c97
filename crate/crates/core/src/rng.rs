//! Deterministic random streams.
//!
//! Every random draw in the crate comes from ChaCha20 (`rand_chacha::ChaCha20Rng`),
//! a counter-based generator. A run is keyed by a 64-bit seed; replicate `r`
//! uses the key `replicate_seed(seed, r)`, and inside one replicate each
//! consumer (loadings, innovations, noise) reads its own 64-bit ChaCha stream
//! so that changing one consumer never shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Independent ChaCha stream identifiers used within a single replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Loadings = 1,
    Innovations = 2,
    Noise = 3,
    Auxiliary = 4,
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key for replicate `replicate` of a run keyed by `seed`.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    splitmix64(seed ^ splitmix64(replicate.wrapping_add(0x5EED)))
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
