//! Per-particle random streams.
//!
//! Each particle owns a ChaCha8 keystream selected by `(seed, particle)`, so
//! its draws depend only on those two values and never on scheduling.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

/// ChaCha key derived once from the user seed and shared by every stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey([u8; 32]);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(seed).fill_bytes(&mut key);
        Self(key)
    }
}

#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, particle: u64) -> Self {
        Self::from_key(&StreamKey::new(seed), particle)
    }

    pub fn from_key(key: &StreamKey, particle: u64) -> Self {
        let mut inner = ChaCha8Rng::from_seed(key.0);
        inner.set_stream(particle);
        Self { inner }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Standard normal (ziggurat).
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }
}
