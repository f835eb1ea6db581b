//! Periodized multi-level discrete wavelet transform over a small fixed bank.
//!
//! Coefficients use the usual pyramid layout: `[a_L | d_L | d_{L-1} | ... | d_1]`
//! where `L` is the number of levels and `a_L` holds `N / 2^L` approximation
//! coefficients.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SensingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WaveletFamily {
    #[serde(rename = "haar")]
    Haar,
    /// Four-tap Daubechies filter (two vanishing moments).
    #[serde(rename = "db4")]
    Daubechies4,
    /// Gaussian low-pass paired with a sampled real Morlet high-pass.
    /// Not orthonormal, so reconstruction is approximate.
    #[serde(rename = "morlet")]
    MorletApprox,
}

impl WaveletFamily {
    pub const ALL: [WaveletFamily; 3] = [
        WaveletFamily::Haar,
        WaveletFamily::Daubechies4,
        WaveletFamily::MorletApprox,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            WaveletFamily::Haar => "haar",
            WaveletFamily::Daubechies4 => "db4",
            WaveletFamily::MorletApprox => "morlet",
        }
    }

    pub fn is_orthonormal(&self) -> bool {
        !matches!(self, WaveletFamily::MorletApprox)
    }

    fn filters(&self) -> FilterPair {
        match self {
            WaveletFamily::Haar => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                FilterPair::quadrature_mirror(vec![s, s])
            }
            WaveletFamily::Daubechies4 => {
                let r3 = 3f64.sqrt();
                let norm = 4.0 * std::f64::consts::SQRT_2;
                FilterPair::quadrature_mirror(vec![
                    (1.0 + r3) / norm,
                    (3.0 + r3) / norm,
                    (3.0 - r3) / norm,
                    (1.0 - r3) / norm,
                ])
            }
            WaveletFamily::MorletApprox => morlet_filters(),
        }
    }
}

impl fmt::Display for WaveletFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WaveletFamily {
    type Err = SensingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| SensingError::UnknownWaveletFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub levels: u32,
}

impl WaveletSpec {
    pub fn new(family: WaveletFamily, levels: u32) -> Self {
        Self { family, levels }
    }

    /// Checks that a window of `len` samples supports this many levels.
    pub fn check_window(&self, len: usize) -> Result<(), SensingError> {
        if len < 2 || !len.is_power_of_two() {
            return Err(SensingError::BadWindowLength(format!(
                "wavelet window must be a power of two >= 2, got {len}"
            )));
        }
        if self.levels == 0 || self.levels > len.trailing_zeros() {
            return Err(SensingError::BadWindowLength(format!(
                "{} levels need a window of at least 2^{} samples, got {len}",
                self.levels, self.levels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoefficients {
    pub spec: WaveletSpec,
    pub data: Vec<f64>,
}

impl WaveletCoefficients {
    /// Approximation coefficients of the coarsest level.
    pub fn approximation(&self) -> &[f64] {
        &self.data[..self.data.len() >> self.spec.levels]
    }
}

struct FilterPair {
    low: Vec<f64>,
    high: Vec<f64>,
}

impl FilterPair {
    fn quadrature_mirror(low: Vec<f64>) -> Self {
        let n = low.len();
        let high = (0..n)
            .map(|k| {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * low[n - 1 - k]
            })
            .collect();
        Self { low, high }
    }
}

fn morlet_filters() -> FilterPair {
    const TAPS: usize = 6;
    let center = (TAPS as f64 - 1.0) / 2.0;
    let gauss = |k: usize| {
        let u = (k as f64 - center) / 1.5;
        (-0.5 * u * u).exp()
    };
    let mut low: Vec<f64> = (0..TAPS).map(gauss).collect();
    let low_sum: f64 = low.iter().sum();
    low.iter_mut()
        .for_each(|v| *v *= std::f64::consts::SQRT_2 / low_sum);

    // cosine at half the sampling rate under the same envelope; removing the
    // mean gives the zero-DC property every wavelet needs
    let mut high: Vec<f64> = (0..TAPS)
        .map(|k| gauss(k) * (std::f64::consts::PI * (k as f64 - center)).cos())
        .collect();
    let mean = high.iter().sum::<f64>() / TAPS as f64;
    high.iter_mut().for_each(|v| *v -= mean);
    let energy = high.iter().map(|v| v * v).sum::<f64>().sqrt();
    high.iter_mut().for_each(|v| *v /= energy);
    FilterPair { low, high }
}

fn analysis_step(input: &[f64], filters: &FilterPair, approx: &mut [f64], detail: &mut [f64]) {
    let n = input.len();
    for k in 0..n / 2 {
        let mut a = 0.0;
        let mut d = 0.0;
        for (j, (&h, &g)) in filters.low.iter().zip(&filters.high).enumerate() {
            let x = input[(2 * k + j) % n];
            a += h * x;
            d += g * x;
        }
        approx[k] = a;
        detail[k] = d;
    }
}

fn synthesis_step(approx: &[f64], detail: &[f64], filters: &FilterPair, out: &mut [f64]) {
    let n = 2 * approx.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for k in 0..approx.len() {
        for (j, (&h, &g)) in filters.low.iter().zip(&filters.high).enumerate() {
            out[(2 * k + j) % n] += h * approx[k] + g * detail[k];
        }
    }
}

pub fn wavelet_decompose(
    samples: &[f64],
    spec: WaveletSpec,
) -> Result<WaveletCoefficients, SensingError> {
    spec.check_window(samples.len())?;
    let filters = spec.family.filters();
    let mut data = samples.to_vec();
    let mut scratch = vec![0.0; samples.len()];
    let mut len = samples.len();
    for _ in 0..spec.levels {
        let (approx, detail) = scratch[..len].split_at_mut(len / 2);
        analysis_step(&data[..len], &filters, approx, detail);
        data[..len].copy_from_slice(&scratch[..len]);
        len /= 2;
    }
    Ok(WaveletCoefficients { spec, data })
}

/// Inverse of [`wavelet_decompose`]. Exact (to rounding) for orthonormal
/// families; the Morlet approximation applies the adjoint filter bank.
pub fn wavelet_reconstruct(
    coefficients: &WaveletCoefficients,
    spec: WaveletSpec,
) -> Result<Vec<f64>, SensingError> {
    if coefficients.spec != spec {
        return Err(SensingError::SpecMismatch {
            expected: spec,
            found: coefficients.spec,
        });
    }
    spec.check_window(coefficients.data.len())?;
    let filters = spec.family.filters();
    let mut data = coefficients.data.clone();
    let mut scratch = vec![0.0; data.len()];
    let mut len = data.len() >> spec.levels;
    for _ in 0..spec.levels {
        let (approx, detail) = data[..2 * len].split_at(len);
        synthesis_step(approx, detail, &filters, &mut scratch[..2 * len]);
        data[..2 * len].copy_from_slice(&scratch[..2 * len]);
        len *= 2;
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const ORTHONORMAL: [WaveletFamily; 2] = [WaveletFamily::Haar, WaveletFamily::Daubechies4];

    #[test]
    fn haar_kills_constants() {
        for levels in 1..=5 {
            let spec = WaveletSpec::new(WaveletFamily::Haar, levels);
            let c = wavelet_decompose(&[3.5; 32], spec).unwrap();
            let n_approx = 32 >> levels;
            assert!(c.data[n_approx..].iter().all(|&d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn haar_single_level_by_hand() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 1);
        let c = wavelet_decompose(&[1.0, 0.0, 0.0, 0.0], spec).unwrap();
        let s = 1.0 / 2f64.sqrt();
        let expected = [s, 0.0, s, 0.0];
        for (a, b) in c.data.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn impulse_in_approximation_gives_scaling_filter() {
        // Level 1 synthesis places h[j] at positions 2k + j for an impulse at a[k].
        for (family, expected) in [
            (
                WaveletFamily::Haar,
                vec![
                    1.0 / 2f64.sqrt(),
                    1.0 / 2f64.sqrt(),
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                ],
            ),
            (WaveletFamily::Daubechies4, {
                let r3 = 3f64.sqrt();
                let n = 4.0 * 2f64.sqrt();
                vec![
                    (1.0 + r3) / n,
                    (3.0 + r3) / n,
                    (3.0 - r3) / n,
                    (1.0 - r3) / n,
                    0.0,
                    0.0,
                    0.0,
                    0.0,
                ]
            }),
        ] {
            let spec = WaveletSpec::new(family, 1);
            let mut data = vec![0.0; 8];
            data[0] = 1.0;
            let x = wavelet_reconstruct(&WaveletCoefficients { spec, data }, spec).unwrap();
            for (a, b) in x.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-15, "{family}: {x:?}");
            }
        }
    }

    #[test]
    fn zero_coefficients_reconstruct_to_zero() {
        for family in WaveletFamily::ALL {
            let spec = WaveletSpec::new(family, 3);
            let x = wavelet_reconstruct(
                &WaveletCoefficients {
                    spec,
                    data: vec![0.0; 64],
                },
                spec,
            )
            .unwrap();
            assert!(x.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for family in ORTHONORMAL {
            for levels in 1..=8 {
                let spec = WaveletSpec::new(family, levels);
                let x: Vec<f64> = (0..256).map(|_| rng.random_range(-1.0..1.0)).collect();
                let c = wavelet_decompose(&x, spec).unwrap();
                let energy_x: f64 = x.iter().map(|v| v * v).sum();
                let energy_c: f64 = c.data.iter().map(|v| v * v).sum();
                assert!((energy_c / energy_x - 1.0).abs() < 1e-9);
                let y = wavelet_reconstruct(&c, spec).unwrap();
                let err = x
                    .iter()
                    .zip(&y)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(err < 1e-9, "{family} L{levels}: {err}");
            }
        }
    }

    #[test]
    fn morlet_is_not_perfect_but_decomposes() {
        let spec = WaveletSpec::new(WaveletFamily::MorletApprox, 2);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = wavelet_decompose(&x, spec).unwrap();
        assert_eq!(c.data.len(), 16);
        let c_const = wavelet_decompose(&[1.0; 16], spec).unwrap();
        assert!(c_const.data[4..].iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn window_and_spec_errors() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 2);
        assert!(matches!(
            wavelet_decompose(&[0.0; 12], spec),
            Err(SensingError::BadWindowLength(_))
        ));
        assert!(matches!(
            wavelet_decompose(&[0.0; 2], spec),
            Err(SensingError::BadWindowLength(_))
        ));
        let c = wavelet_decompose(&[0.0; 8], spec).unwrap();
        let other = WaveletSpec::new(WaveletFamily::Daubechies4, 2);
        assert!(matches!(
            wavelet_reconstruct(&c, other),
            Err(SensingError::SpecMismatch { .. })
        ));
    }

    #[test]
    fn family_names_round_trip() {
        for f in WaveletFamily::ALL {
            assert_eq!(f.name().parse::<WaveletFamily>().unwrap(), f);
        }
        assert!(matches!(
            "sym8".parse::<WaveletFamily>(),
            Err(SensingError::UnknownWaveletFamily(_))
        ));
    }
}
