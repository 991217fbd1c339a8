//! Deterministic, counter-based random number generation.
//!
//! Every randomized component in the crate draws from an [`RngState`],
//! which wraps a ChaCha8 block cipher keyed by a 64-bit seed. ChaCha is a
//! counter-mode generator, so `(seed, stream)` fully determines the draw
//! sequence on every platform, and independent work items can take
//! disjoint `stream` ids without coordinating.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Seeded, streamable RNG state.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngState {
    /// Stream 0 of the given seed.
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// An independent stream of the same seed. Streams never overlap.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    /// Derive a fresh child stream; useful for handing sub-tasks their own
    /// reproducible source without consuming draws from this one.
    pub fn child(&self, stream: u64) -> Self {
        Self::stream(self.seed, self.stream.wrapping_mul(0x9e37_79b9).wrapping_add(stream + 1))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Integer draw in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// Gaussian draw via Box-Muller. Self-contained so the byte stream is
    /// identical across platforms and crate versions.
    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        // u1 in (0, 1] so the log is finite.
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let mag = (-2.0 * u1.ln()).sqrt();
        mean + std * mag * (std::f64::consts::TAU * u2).cos()
    }

    /// Vector of iid Gaussian draws.
    pub fn normal_vec(&mut self, n: usize, mean: f64, std: f64) -> Vec<f64> {
        (0..n).map(|_| self.normal(mean, std)).collect()
    }

    /// Uniform draw from the k-ball of radius `r`: Gaussian direction
    /// scaled by `r * u^(1/k)`.
    pub fn in_ball(&mut self, k: usize, r: f64) -> Vec<f64> {
        let dir = self.normal_vec(k, 0.0, 1.0);
        let n = super::matrix::norm(&dir);
        let radius = r * self.uniform().powf(1.0 / k as f64);
        if n == 0.0 {
            return vec![0.0; k];
        }
        dir.iter().map(|&d| d / n * radius).collect()
    }

    /// Random unit vector in `R^k`.
    pub fn unit_vector(&mut self, k: usize) -> Vec<f64> {
        loop {
            let dir = self.normal_vec(k, 0.0, 1.0);
            let n = super::matrix::norm(&dir);
            if n > 1e-12 {
                return dir.iter().map(|&d| d / n).collect();
            }
        }
    }
}
