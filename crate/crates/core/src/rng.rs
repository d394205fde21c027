//! Counter-style stream derivation.
//!
//! Every random draw in the pipeline comes from a ChaCha8 generator whose
//! seed is a pure function of `(master_seed, domain, a, b)`. A stream can be
//! rebuilt in isolation, so ensemble members, epochs and analysis draws can
//! run in any order or on any thread and still produce the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Keeps e.g. the init stream of member 3 apart
/// from the noise stream of epoch 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    TrainNoise = 2,
    AnalysisNoise = 3,
    SceneNoise = 4,
    Test = 5,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn absorb(master_seed: u64, words: &[u64]) -> u64 {
    let mut state = master_seed;
    for &word in words {
        state ^= word.wrapping_mul(0xd6e8_feb8_6659_fd93);
        state = splitmix64(&mut state);
    }
    state
}

/// A 64-bit seed that is a pure function of `master_seed` and `words`. Used
/// to give every ensemble of an experiment its own master seed.
pub fn derive_seed(master_seed: u64, words: &[u64]) -> u64 {
    let mut state = absorb(master_seed, words);
    splitmix64(&mut state)
}

/// Generator for stream `(master_seed, domain, a, b)`.
pub fn stream(master_seed: u64, domain: Domain, a: u64, b: u64) -> StreamRng {
    let mut state = absorb(master_seed, &[domain as u64, a, b]);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
