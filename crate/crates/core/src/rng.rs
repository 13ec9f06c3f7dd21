//! Seed derivation and counter-based randomness.
//!
//! Every random quantity is a pure function of a 64-bit seed plus a
//! position, so ensembles can be regenerated path-by-path on any number of
//! workers. The generator is ChaCha8 from `rand_chacha`; positions select a
//! stream id and a word offset, which ChaCha supports in O(1).

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Identifier recorded in every manifest.
pub const RNG_ALGORITHM: &str = "chacha8(rand_chacha-0.3)+splitmix64-derive";

/// Stream ids reserved for the environment realization.
pub(crate) const STREAM_ENV_FORWARD: u64 = 0x454e_5646;
pub(crate) const STREAM_ENV_BACKWARD: u64 = 0x454e_5642;
pub(crate) const STREAM_ENV_ANCHOR: u64 = 0x454e_5641;

/// SplitMix64 finalizer applied to `parent ^ tag`-style inputs.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ splitmix64(label.wrapping_add(0x632b_e59b_d9b4_e019)))
}

/// Sequential generator for one path or one worker task.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Maps 64 random bits to a uniform double in [0, 1).
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Counter-based access to a uniform sequence: the value at position `pos`
/// of stream `stream` under `seed`.
pub struct CounterUniform {
    rng: ChaCha8Rng,
}

impl CounterUniform {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self {
            rng: stream_rng(seed, stream),
        }
    }

    /// Positions the generator at `pos` (each draw consumes two 32-bit words).
    pub fn seek(&mut self, pos: u64) {
        self.rng.set_word_pos(u128::from(pos) * 2);
    }

    pub fn next_unit(&mut self) -> f64 {
        unit_f64(self.rng.next_u64())
    }

    pub fn at(&mut self, pos: u64) -> f64 {
        self.seek(pos);
        self.next_unit()
    }
}
