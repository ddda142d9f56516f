//! Seeded generator with fixed reductions.
//!
//! The stream is ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded through
//! `SeedableRng::seed_from_u64`. Every draw consumes exactly one `u64`:
//!
//! - integer in `[0, n)`: `(x as u128 * n as u128) >> 64`
//! - float in `[0, 1)`: `(x >> 11) as f64 * 2^-53`
//! - shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`
//!
//! Any implementation with the same stream and reductions reproduces the
//! same campaigns.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub const ALGORITHM: &str = "chacha8/seed_from_u64";

#[derive(Debug, Clone)]
pub struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform integer in `[0, n)`; `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        ((u128::from(self.next_u64()) * u128::from(n)) >> 64) as u64
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn int_between(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        lo + self.below(hi - lo + 1)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Bernoulli draw. Always consumes one value, also for `p = 1`.
    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
