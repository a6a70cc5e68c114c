use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::Real;

/// Seeded ChaCha8 stream. ChaCha output is specified independently of the
/// host, so a seed gives the same stream on every platform.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: ChaCha8Rng,
}

/// Independent streams drawn from one run seed.
pub mod stream {
    pub const TOPOLOGY: u64 = 1;
    pub const ADVERSARY: u64 = 2;
    pub const WORKLOAD: u64 = 3;
    pub const PROTOCOL: u64 = 4;
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Stream `id` of `seed`; streams never overlap.
    pub fn derive(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        SeededRng { inner }
    }

    /// Uniform draw from `[0, 1)`.
    pub fn unit<T: Real>(&mut self) -> T {
        // 53 random bits, exact in f64.
        let bits = self.inner.next_u64() >> 11;
        T::lit(bits as f64 * (1.0 / (1u64 << 53) as f64))
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("exponential rate must be positive and finite, got {0}")]
pub struct BadRate(pub f64);

/// Inverse-CDF draw from Exp(`rate`).
pub fn sample_exponential<T: Real>(rng: &mut SeededRng, rate: T) -> Result<T, BadRate> {
    if !(rate > T::zero()) || !rate.is_finite() {
        return Err(BadRate(rate.as_f64()));
    }
    let u: T = rng.unit();
    // 1 - u is in (0, 1], so the log is finite and the result is >= 0.
    Ok(-(T::one() - u).ln() / rate)
}
