//! Seeded random streams.
//!
//! Every stochastic routine in the crate draws from [`Stream`], which wraps
//! the ChaCha8 generator from `rand_chacha` seeded through
//! `SeedableRng::seed_from_u64`. Uniform doubles are produced from the raw
//! 64-bit output as `(u >> 11) * 2^-53`, so the stream can be replicated in
//! any language with a ChaCha8 implementation and the same seed expansion
//! (PCG32 fill of the 32-byte key, as in `rand_core`).
//!
//! Generator id: `chacha8-seed_from_u64-v1`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const GENERATOR_ID: &str = "chacha8-seed_from_u64-v1";

#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent child stream; `tag` distinguishes siblings derived from one seed.
    pub fn derive(seed: u64, tag: u64) -> Self {
        Self::new(seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [lo, hi).
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform on (0, 1]; safe as a logarithm argument.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    /// Log-uniform on [lo, hi), both positive.
    pub fn log_range(&mut self, lo: f64, hi: f64) -> f64 {
        (lo.ln() + (hi.ln() - lo.ln()) * self.uniform()).exp()
    }

    /// Uniform index in 0..len (modulo bias is irrelevant at these sizes).
    pub fn index(&mut self, len: usize) -> usize {
        (self.next_u64() % len as u64) as usize
    }

    /// Standard normal via Box–Muller (one value per call).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.open_unit();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Uniform direction on the unit sphere of R^n.
    pub fn direction(&mut self, n: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| self.normal()).collect();
            let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|c| c / norm).collect();
            }
        }
    }

    /// Uniform point in the cube [-half, half]^n.
    pub fn point_in_cube(&mut self, n: usize, half: f64) -> Vec<f64> {
        (0..n).map(|_| self.range(-half, half)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = Stream::new(42);
        let mut b = Stream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut s = Stream::new(1);
        for _ in 0..10_000 {
            let u = s.uniform();
            assert!((0.0..1.0).contains(&u));
            let o = s.open_unit();
            assert!(o > 0.0 && o <= 1.0);
        }
    }

    #[test]
    fn derived_streams_differ() {
        let mut a = Stream::derive(7, 1);
        let mut b = Stream::derive(7, 2);
        assert_ne!(a.next_u64(), b.next_u64());
    }
}
