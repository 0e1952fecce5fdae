//! Seeded, platform-stable event generator.
//!
//! Every simulated event log is produced by ChaCha8 (`rand_chacha`), seeded
//! from a 64-bit seed through `SeedableRng::seed_from_u64`. A uniform variate
//! is the top 53 bits of one `next_u64` output scaled by 2^-53, so the
//! sequence of draws is identical on every platform. Independent repeats use
//! the same seed on distinct ChaCha streams (`stream = repeat index + 1`;
//! stream 0 is the single-run stream).

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

#[derive(Debug, Clone)]
pub struct EventRng {
    inner: ChaCha8Rng,
}

impl EventRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Generator for repeat `index` of a family of independent runs.
    pub fn for_repeat(seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(index.wrapping_add(1));
        Self { inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform variate in `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `true` with probability `p`.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }
}

/// Inverse-CDF sampler over a finite set of categories.
#[derive(Debug, Clone)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    /// Builds the sampler from nonnegative weights (normalized internally).
    pub fn new(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        // The last positive-weight category absorbs rounding in the running
        // sum; trailing zero-weight categories stay unreachable.
        if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
            for c in &mut cumulative[last..] {
                *c = 1.0;
            }
        }
        Self { cumulative }
    }

    pub fn sample(&self, rng: &mut EventRng) -> usize {
        let u = rng.uniform();
        self.cumulative.partition_point(|&c| c <= u)
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }
}
