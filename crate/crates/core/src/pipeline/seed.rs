//! Deterministic per-sample RNG streams.
//!
//! Every random decision in the pipeline draws from a stream derived from
//! `(global_seed, sample_id, stage_tag)`. Derivation is a plain FNV-1a /
//! SplitMix64 chain, so streams are stable across platforms and completely
//! independent of execution order or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// The single source of randomness for a dataset build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPolicy {
    pub global_seed: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl SeedPolicy {
    pub fn new(global_seed: u64) -> Self {
        SeedPolicy { global_seed }
    }

    /// The RNG stream for one (sample, stage) pair.
    pub fn stream(&self, sample_id: &str, stage_tag: &str) -> ChaCha12Rng {
        let mut h = fnv1a64(FNV_OFFSET, &self.global_seed.to_le_bytes());
        h = fnv1a64(h, sample_id.as_bytes());
        h = fnv1a64(h, &[0x1f]); // separator: ("ab","c") != ("a","bc")
        h = fnv1a64(h, stage_tag.as_bytes());

        let mut state = h;
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        ChaCha12Rng::from_seed(seed)
    }
}
