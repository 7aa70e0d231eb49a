//! Counter-based random streams.
//!
//! Every random draw is addressed by `(seed, stream, counter)`: the seed keys
//! a ChaCha8 generator, the stream selects an independent ChaCha stream and
//! the counter is the word position inside it. Shot `i` of an acquisition
//! always reads the same words no matter how the work is scheduled, so
//! parallel and serial runs agree bit for bit.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Address of a random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NoiseKey {
    pub seed: u64,
    pub stream: u64,
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl NoiseKey {
    pub fn new(seed: u64) -> Self {
        NoiseKey { seed, stream: 0 }
    }

    /// Derive a sub-stream, e.g. per sweep point or per qubit state.
    pub fn child(self, tag: u64) -> Self {
        NoiseKey { seed: self.seed, stream: mix64(self.stream ^ mix64(tag.wrapping_add(0x5851_F42D))) }
    }

    /// Generator positioned at `word` (32-bit words) in this stream.
    pub fn rng_at(self, word: u128) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word);
        rng
    }

    pub fn rng(self) -> ChaCha8Rng {
        self.rng_at(0)
    }
}

/// Two 64-bit draws → two independent standard normals (Box–Muller).
/// Consumes exactly four 32-bit words.
pub fn normal_pair<R: RngCore>(rng: &mut R) -> (f64, f64) {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let u1 = ((rng.next_u64() >> 11) + 1) as f64 * SCALE; // (0, 1]
    let u2 = (rng.next_u64() >> 11) as f64 * SCALE; // [0, 1)
    let r = libm::sqrt(-2.0 * libm::log(u1));
    let (s, c) = libm::sincos(core::f64::consts::TAU * u2);
    (r * c, r * s)
}

/// Words consumed by one shot of complex Gaussian noise.
pub const WORDS_PER_SHOT: u128 = 4;
