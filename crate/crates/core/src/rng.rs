//! Seeded random streams.
//!
//! Every stochastic step draws from a ChaCha8 generator whose 256-bit key is
//! derived from `(seed, stream tag)` with SplitMix64. ChaCha output is fully
//! specified, so replicates are reproducible across platforms and independent
//! of how many run concurrently.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream tags keep the sub-generators of one replicate independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Population = 1,
    Groups = 2,
    Adversary = 3,
    SeedGraph = 4,
    Rewire = 5,
    Ratings = 6,
    Behavior = 7,
    FitInit = 8,
    Target = 9,
    Degrees = 10,
    Calibrate = 11,
}

pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes two words into one seed; used to derive per-replicate seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut s = base ^ index.wrapping_mul(0xD605_BBB5_8C8A_BE4B);
    splitmix64(&mut s);
    splitmix64(&mut s)
}

pub fn stream(seed: u64, tag: Stream) -> SimRng {
    let mut state = seed ^ (tag as u64).wrapping_mul(0xA076_1D64_78BD_642F);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
