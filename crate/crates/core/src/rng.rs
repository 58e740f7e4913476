//! Counter-based uniform draws.
//!
//! A draw is a pure function of `(seed, step, layer, row, col)`: the
//! coordinates are folded through the SplitMix64 finalizer one at a time, so
//! flip decisions do not depend on evaluation order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Coordinate-addressed uniform generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeterministicRng {
    seed: u64,
}

impl DeterministicRng {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Raw 64-bit output at the given coordinates.
    pub fn bits_at(&self, step: u64, layer: u64, row: u64, col: u64) -> u64 {
        let mut h = mix64(self.seed.wrapping_add(GOLDEN));
        for c in [step, layer, row, col] {
            h = mix64(h ^ c.wrapping_add(GOLDEN).wrapping_mul(GOLDEN));
        }
        h
    }

    /// Uniform draw in `[0, 1)` with 53 bits of resolution.
    pub fn uniform(&self, step: u64, layer: u64, row: u64, col: u64) -> f64 {
        (self.bits_at(step, layer, row, col) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// A sequential generator for one-off streams (initialisation,
    /// shuffling), keyed by a purpose tag so that streams do not overlap.
    pub fn stream(&self, purpose: u64, index: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.bits_at(u64::MAX, purpose, index, 0))
    }
}
