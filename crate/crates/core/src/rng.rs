//! Deterministic stream derivation for reproducible experiments.
//!
//! Every random quantity in an experiment (channel, symbols, solver init,
//! noise at each SNR point) draws from its own ChaCha8 stream derived from
//! `(master seed, stream id)`. Streams are independent of scheduling, so
//! results do not change with the worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 step; a small, well-known mixer with stable output across
/// platforms. Used only to expand seeds, never as the simulation RNG.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a master seed with a stream id into a single 64-bit seed.
pub fn mix_seed(master: u64, stream: u64) -> u64 {
    let mut state = master;
    let a = splitmix64(&mut state);
    let mut state = a ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    splitmix64(&mut state)
}

/// A ChaCha8 generator for the given `(master, stream)` pair.
pub fn stream_rng(master: u64, stream: u64) -> ChaCha8Rng {
    let mut state = mix_seed(master, stream);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
