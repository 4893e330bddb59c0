//! Portable seeded randomness.
//!
//! Splits and initializations must reproduce bit-for-bit across platforms and
//! across implementations in other languages, so every draw is defined here in
//! terms of a ChaCha20 keystream (RFC 7539 block function, 64-bit counter,
//! stream 0) rather than through `rand`'s distribution helpers, whose sampling
//! algorithms are allowed to change between releases.
//!
//! * key: the 64-bit seed in little-endian bytes, followed by 24 zero bytes
//! * `next_u64`: two consecutive keystream words, low word first
//! * `unit_f64`: `(next_u64 >> 11) * 2^-53`, uniform on `[0, 1)`
//! * `below(n)`: rejection sampling on `next_u64` against the largest multiple
//!   of `n` that fits in 64 bits

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Version tag of the draw rules above; recorded in run manifests.
pub const RNG_VERSION: &str = "chacha20-le64-v1";

pub struct PortableRng {
    inner: ChaCha20Rng,
}

impl PortableRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    pub fn next_u64(&mut self) -> u64 {
        let lo = self.inner.next_u32() as u64;
        let hi = self.inner.next_u32() as u64;
        (hi << 32) | lo
    }

    pub fn unit_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let x = self.next_u64();
            if x < zone {
                return x % n;
            }
        }
    }

    /// Fisher-Yates, walking from the back.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
