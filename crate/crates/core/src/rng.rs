//! Counter-based pseudo-random utilities.
//!
//! Everything stochastic in this crate (entity placement, episode seeds,
//! noise injection, weight init, batch shuffling) is keyed by explicit
//! integer tuples hashed through a splitmix64 finalizer. Outputs depend only
//! on the key, never on call order or thread schedule, so parallel and
//! sequential runs produce identical artifacts.

/// splitmix64 finalizer: a bijective avalanche mix of a 64-bit word.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a key tuple into a single u64. Each word is absorbed through a
/// splitmix round so (1, 0) and (0, 1) land far apart.
pub fn mix(words: &[u64]) -> u64 {
    let mut h = 0x853c_49e6_748f_ea9bu64;
    for &w in words {
        h = splitmix64(h ^ w);
    }
    splitmix64(h)
}

/// Uniform f64 in [0, 1) from a key tuple (53 mantissa bits).
pub fn unit_f64(words: &[u64]) -> f64 {
    (mix(words) >> 11) as f64 / (1u64 << 53) as f64
}

/// A tiny sequential generator over the same mix, for code that wants a
/// stream (grammar sampling, shuffles) rather than per-element keys.
/// Seeded streams are reproducible across platforms.
#[derive(Debug, Clone)]
pub struct CounterRng {
    seed: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        CounterRng { seed, counter: 0 }
    }

    /// Derive an independent stream; `tag` separates uses of the same seed.
    pub fn derive(seed: u64, tag: u64) -> Self {
        CounterRng::new(mix(&[seed, tag]))
    }

    pub fn next_u64(&mut self) -> u64 {
        let v = mix(&[self.seed, self.counter]);
        self.counter += 1;
        v
    }

    /// Uniform f64 in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform integer in [0, bound) via rejection-free multiply-shift.
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        ((self.next_u64() as u128 * bound as u128) >> 64) as u64
    }

    /// Uniform f64 in [lo, hi).
    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Pick an index with probability proportional to `weights`.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut u = self.next_f64() * total;
        for (i, &w) in weights.iter().enumerate() {
            u -= w;
            if u < 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            xs.swap(i, j);
        }
    }
}
