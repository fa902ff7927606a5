//! Seeded random source shared by the simulators.
//!
//! The generator is ChaCha20 (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`. Uniform doubles take the top 53 bits of
//! `next_u64`. Both are fixed algorithms, so a seed reproduces the same
//! stream on every platform.

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

const INV_2_POW_53: f64 = 1.0 / 9_007_199_254_740_992.0;

pub const ALGORITHM: &str = "chacha20/seed_from_u64";

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha20Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * INV_2_POW_53
    }

    /// Uniform in `(0, 1]`.
    pub fn uniform_open0(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * INV_2_POW_53
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Failures before the first success of Bernoulli(`p`) trials, or `None`
    /// when `p == 0`. Sampled by inversion.
    pub fn geometric_failures(&mut self, p: f64) -> Option<u64> {
        if p <= 0.0 {
            return None;
        }
        if p >= 1.0 {
            return Some(0);
        }
        let k = libm::floor(libm::log(self.uniform_open0()) / libm::log1p(-p));
        if k >= u64::MAX as f64 {
            None
        } else {
            Some(k as u64)
        }
    }

    /// Standard normal deviate (Box-Muller, one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_open0();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }
}
