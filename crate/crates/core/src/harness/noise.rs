//! Seeded additive sensor noise.
//!
//! Each stream is `ChaCha8Rng::seed_from_u64(seed)` switched to a stream
//! number, so streams are independent and reproducible in any order. Within
//! a window, draws run frame by frame and sensor by sensor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::SensorFrame;

/// Stream used by scenario runs. Experiment trials use `TRIAL_STREAM_BASE + k`.
pub const RUN_STREAM: u64 = 0;
pub const TRIAL_STREAM_BASE: u64 = 1;

#[derive(Debug, Clone)]
pub struct NoiseSource {
    rng: ChaCha8Rng,
    snr_db: f64,
}

impl NoiseSource {
    pub fn new(seed: u64, stream: u64, snr_db: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, snr_db }
    }

    /// Standard deviation giving the configured SNR for a window whose mean
    /// sample power is `power`.
    pub fn sigma(&self, power: f64) -> f64 {
        (power / 10f64.powf(self.snr_db / 10.0)).sqrt()
    }

    /// Adds white Gaussian noise to a window in place.
    pub fn corrupt(&mut self, frames: &mut [SensorFrame]) {
        let mut power = 0.0;
        let mut n = 0usize;
        for f in frames.iter() {
            for s in &f.samples {
                power += s * s;
                n += 1;
            }
        }
        if n == 0 {
            return;
        }
        let sigma = self.sigma(power / n as f64);
        for f in frames.iter_mut() {
            for s in f.samples.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *s += sigma * z;
            }
        }
    }
}
