//! Deterministic random streams.
//!
//! Every stochastic step derives its own ChaCha stream from the run seed and a
//! small tuple of coordinates (epoch, target, round...). Streams never depend on
//! thread scheduling, so parallel view construction stays reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream purposes; keeps streams for different stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 1,
    Shuffle = 2,
    TrainView = 3,
    InferView = 4,
    Inject = 5,
    Synth = 6,
    Sweep = 7,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a list of coordinates into one 64-bit stream key.
pub fn derive_seed(seed: u64, stream: Stream, coords: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for &c in coords {
        h = splitmix64(h ^ c.wrapping_mul(0xD6E8_FEB8_6659_FD93));
    }
    h
}

pub fn stream(seed: u64, stream: Stream, coords: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, stream, coords))
}
