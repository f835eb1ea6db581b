use std::f64::consts::PI;

use super::Band;

/// Second-order band-pass section (constant 0 dB peak gain), centred on the
/// geometric mean of the band edges with `Q = f0 / (high - low)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl BandPass {
    pub fn design(band: Band, sample_rate: f64) -> Self {
        let f0 = band.center();
        let q = f0 / (band.high - band.low);
        let w0 = 2.0 * PI * f0 / sample_rate;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Magnitude of the frequency response at `freq`.
    pub fn gain_at(&self, freq: f64, sample_rate: f64) -> f64 {
        let w = 2.0 * PI * freq / sample_rate;
        let (s1, c1) = w.sin_cos();
        let (s2, c2) = (2.0 * w).sin_cos();
        let num = (self.b0 + self.b2 * c2, -self.b2 * s2);
        let den = (
            1.0 + self.a1 * c1 + self.a2 * c2,
            -self.a1 * s1 - self.a2 * s2,
        );
        (num.0.hypot(num.1)) / (den.0.hypot(den.1))
    }
}

/// Transposed direct-form II state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FilterState {
    s1: f64,
    s2: f64,
}

impl FilterState {
    /// State reached after an input `u` has been held forever (output 0,
    /// since the section rejects DC).
    pub fn settled(filter: &BandPass, u: f64) -> Self {
        let s2 = filter.b2 * u;
        Self { s1: s2, s2 }
    }

    #[inline]
    pub fn step(&mut self, f: &BandPass, x: f64) -> f64 {
        let y = f.b0 * x + self.s1;
        self.s1 = -f.a1 * y + self.s2;
        self.s2 = f.b2 * x - f.a2 * y;
        y
    }
}
