//! Seeded randomness shared by every stochastic step in the crate.
//!
//! All draws come from ChaCha20 (`rand_chacha` 0.3, `ChaCha20Rng`) so that
//! another implementation can reproduce them from the seed alone:
//!
//! * key: the 64-bit seed in little-endian order in bytes `0..8`, zeros in `8..32`
//! * stream: `(purpose << 32) | index`, where `purpose` is one of the tags
//!   below and `index` disambiguates the sub-task (space, bank, epoch, ...)
//! * word position starts at 0; values are consumed with `next_u64`
//!
//! Derived draws:
//!
//! * uniform in `[0, 1)`: `(next_u64 >> 11) * 2^-53`
//! * standard normal: Box-Muller cosine branch,
//!   `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)` with two consecutive uniforms
//! * integer in `[0, n)`: `next_u64 % n`
//! * shuffle: Fisher-Yates from the last index down, `j = below(i + 1)`

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Stream purpose tags.
pub mod purpose {
    pub const SYNTH_CENTERS: u64 = 1;
    pub const SYNTH_SAMPLES: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const PROTOTYPES: u64 = 4;
    pub const HEAD_INIT: u64 = 5;
    pub const TRAIN_SHUFFLE: u64 = 6;
    pub const PERTURB: u64 = 7;
    pub const RELABEL: u64 = 8;
}

pub struct StreamRng {
    inner: ChaCha20Rng,
}

impl StreamRng {
    pub fn new(seed: u64, purpose: u64, index: u32) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut inner = ChaCha20Rng::from_seed(key);
        inner.set_stream((purpose << 32) | u64::from(index));
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * (1.0 - u1).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.next_u64() % n as u64) as usize
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
