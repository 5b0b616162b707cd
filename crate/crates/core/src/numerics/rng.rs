//! Seeded, splittable randomness.
//!
//! All stochastic operations in the crate draw from a [`SeededRng`]. Streams
//! can be split by name, so independent pipeline stages get independent
//! generators whose output does not depend on how much randomness other
//! stages consumed. Floating-point draws are built from raw bits here rather
//! than through distribution adapters, so results are stable across
//! dependency upgrades.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SeededRng {
    rng: ChaCha8Rng,
    key: u64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            rng: ChaCha8Rng::seed_from_u64(seed),
            key: seed,
        }
    }

    /// Derives a child generator from this generator's key and a label.
    /// Independent of how many values have been drawn, so two stages that
    /// split by different names never interact.
    pub fn split_named(&self, label: &str) -> Self {
        let seed = fnv1a(
            self.key
                .to_le_bytes()
                .into_iter()
                .chain(label.bytes()),
        );
        SeededRng::new(seed)
    }

    /// Derives a child generator by drawing from this generator's stream.
    pub fn split(&mut self) -> Self {
        let seed = self.next_u64();
        SeededRng::new(seed ^ FNV_PRIME)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform index in `0..n`. Panics if `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index over empty range");
        (((self.next_u64() as u128) * (n as u128)) >> 64) as usize
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices sampled without replacement from `0..n`, in
    /// selection order. Panics if `k > n`.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} from {n} without replacement");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    /// Samples an index from an unnormalized nonnegative weight vector.
    /// Panics if the total weight is not positive and finite.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(
            total > 0.0 && total.is_finite(),
            "categorical weights must have positive finite sum"
        );
        let u = self.uniform() * total;
        let mut acc = 0.0;
        let mut last_positive = 0;
        for (i, w) in weights.iter().enumerate() {
            if *w > 0.0 {
                last_positive = i;
            }
            acc += w;
            if u < acc {
                return i;
            }
        }
        last_positive
    }
}
