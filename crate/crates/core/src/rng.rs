//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator keyed by the master seed, with the
//! 64-bit ChaCha stream id set to the stream index. Stream `k` is therefore a
//! pure function of `(seed, k)`: trials can be run in any order, on any number
//! of threads, and still draw the same numbers.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A counter-addressed pseudo-random stream (ChaCha8, stream id = index).
#[derive(Debug, Clone)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        Self { rng }
    }

    /// Stream for trial `trial` of grid point `point` in a campaign.
    pub fn for_trial(seed: u64, point: usize, trial: usize) -> Self {
        Self::new(seed, ((point as u64) << 40) | trial as u64)
    }

    /// Standard circular complex normal draw, E|g|^2 = 1.
    pub fn complex_normal(&mut self) -> Complex64 {
        let re: f64 = self.rng.sample(StandardNormal);
        let im: f64 = self.rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    pub fn sample<T, D: rand::distr::Distribution<T>>(&mut self, dist: D) -> T {
        self.rng.sample(dist)
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
