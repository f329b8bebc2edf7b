//! Counter-based random source.
//!
//! Each `(seed, stream)` pair selects an independent ChaCha8 keystream, so
//! sample `i` of a run always draws from stream `i` no matter which worker
//! executes it.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Largest multiple of 6 not exceeding `2^64`; draws at or above it are
/// rejected so the direction is exactly uniform.
const DIR_LIMIT: u64 = u64::MAX - 3;

#[derive(Clone, Debug)]
pub struct RandomSource {
    rng: ChaCha8Rng,
    seed: u64,
    stream: u64,
}

impl RandomSource {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RandomSource { rng, seed, stream }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent source for a sub-task; derived only from `(seed, stream)`.
    pub fn fork(&self, salt: u64) -> RandomSource {
        let mixed = self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        RandomSource::new(mixed, self.stream)
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform direction code in `0..6`, one accepted word per call.
    #[inline]
    pub fn direction(&mut self) -> u8 {
        loop {
            let w = self.rng.next_u64();
            if w < DIR_LIMIT {
                return (w % 6) as u8;
            }
        }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`, unbiased.
    pub fn index(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n + 1) % n;
        loop {
            let w = self.rng.next_u64();
            if w <= zone {
                return w % n;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn limit_is_a_multiple_of_six() {
        // accepted words are 0 ..= DIR_LIMIT - 1
        assert_eq!((DIR_LIMIT as u128) % 6, 0);
        assert_eq!(((1u128 << 64) - DIR_LIMIT as u128), 4);
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: Vec<u8> = {
            let mut r = RandomSource::new(7, 3);
            (0..64).map(|_| r.direction()).collect()
        };
        let b: Vec<u8> = {
            let mut r = RandomSource::new(7, 3);
            (0..64).map(|_| r.direction()).collect()
        };
        let c: Vec<u8> = {
            let mut r = RandomSource::new(7, 4);
            (0..64).map(|_| r.direction()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn index_is_in_range() {
        let mut r = RandomSource::new(1, 0);
        for n in [1u64, 2, 3, 6, 7, 1000] {
            for _ in 0..100 {
                assert!(r.index(n) < n);
            }
        }
    }
}
