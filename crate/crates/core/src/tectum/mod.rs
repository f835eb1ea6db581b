//! Readout stage: gathers the three maps into one feature vector, decodes
//! object position with a linear (ridge) readout, and labels each tick with a
//! symbolic event kind from burst statistics.

mod ridge;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::maps::{MapActivity, SegmentId};

#[derive(Debug, Error)]
pub enum TectumError {
    #[error("map activities come from different ticks: {0:?}")]
    TickMismatch([u64; 3]),
    #[error("expected {expected} activity in slot {slot}, got {found}")]
    SegmentMismatch {
        slot: usize,
        expected: SegmentId,
        found: SegmentId,
    },
    #[error("normal matrix is singular; use a positive ridge lambda")]
    SingularSystem,
    #[error("decoder has not been trained")]
    Untrained,
    #[error("bad training set: {0}")]
    BadTrainingSet(String),
    #[error("feature vector has length {found}, decoder expects {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("decoder file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ObjectEcho,
    ExternalLowFreqField,
    ConspecificChirp,
    Quiet,
}

impl EventKind {
    pub const ALL: [EventKind; 4] = [
        EventKind::ObjectEcho,
        EventKind::ExternalLowFreqField,
        EventKind::ConspecificChirp,
        EventKind::Quiet,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::ObjectEcho => "object_echo",
            EventKind::ExternalLowFreqField => "external_low_freq_field",
            EventKind::ConspecificChirp => "conspecific_chirp",
            EventKind::Quiet => "quiet",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub kind: EventKind,
    /// Decoded position along the body axis; only set for object echoes.
    pub position: Option<f64>,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with component `index` set to zero.
    pub fn lesioned(&self, index: usize) -> FeatureVector {
        let mut v = self.0.clone();
        v[index] = 0.0;
        FeatureVector(v)
    }
}

/// Concatenates CMS, CLS and LS activity followed by the three burst rates.
pub fn assemble_features(
    cms: &MapActivity,
    cls: &MapActivity,
    ls: &MapActivity,
    burst_rates: [f64; 3],
) -> Result<FeatureVector, TectumError> {
    let maps = [cms, cls, ls];
    for (slot, (m, expected)) in maps.iter().zip(SegmentId::ALL).enumerate() {
        if m.segment != expected {
            return Err(TectumError::SegmentMismatch {
                slot,
                expected,
                found: m.segment,
            });
        }
    }
    if cms.tick != cls.tick || cls.tick != ls.tick {
        return Err(TectumError::TickMismatch([cms.tick, cls.tick, ls.tick]));
    }
    let len = maps.iter().map(|m| m.activity.len()).sum::<usize>() + 3;
    let mut v = Vec::with_capacity(len);
    for m in maps {
        v.extend_from_slice(&m.activity);
    }
    v.extend_from_slice(&burst_rates);
    Ok(FeatureVector(v))
}

/// Affine readout `position = w · f + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    weights: Vec<f64>,
    bias: f64,
    ridge_lambda: f64,
    feature_mean: Vec<f64>,
    feature_scale: Vec<f64>,
    training_residual: f64,
    trained: bool,
}

impl Decoder {
    pub fn untrained(len: usize) -> Self {
        Self {
            weights: vec![0.0; len],
            bias: 0.0,
            ridge_lambda: 0.0,
            feature_mean: vec![0.0; len],
            feature_scale: vec![1.0; len],
            training_residual: 0.0,
            trained: false,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// RMS error on the training set.
    pub fn training_residual(&self) -> f64 {
        self.training_residual
    }

    pub fn feature_len(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, f: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(f).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Heuristic novelty score in `(0, 1]`: inputs whose RMS z-score relative
    /// to the training features is at most one score 1. Not a probability.
    fn confidence(&self, f: &[f64]) -> f64 {
        let n = f.len() as f64;
        let z2: f64 = f
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((x, m), s)| ((x - m) / s).powi(2))
            .sum();
        (-((z2 / n).sqrt() - 1.0).max(0.0)).exp()
    }

    pub fn decode(&self, f: &FeatureVector) -> Result<(f64, f64), TectumError> {
        decode_position(self, f)
    }

    /// Writes the decoder as plain text. After five header records
    /// (`features`, `lambda`, `bias`, `residual`, `trained`) each line holds
    /// `index weight feature_mean feature_scale`.
    pub fn write_to(&self, mut w: impl Write) -> Result<(), TectumError> {
        writeln!(w, "# webca linear decoder")?;
        writeln!(w, "# columns: index weight feature_mean feature_scale")?;
        writeln!(w, "features {}", self.weights.len())?;
        writeln!(w, "lambda {}", self.ridge_lambda)?;
        writeln!(w, "bias {}", self.bias)?;
        writeln!(w, "residual {}", self.training_residual)?;
        writeln!(w, "trained {}", self.trained)?;
        for (i, ((wt, m), s)) in self
            .weights
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .enumerate()
        {
            writeln!(w, "{i} {wt} {m} {s}")?;
        }
        Ok(())
    }

    pub fn read_from(r: impl BufRead) -> Result<Self, TectumError> {
        let mut lines = r
            .lines()
            .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty() || s.starts_with('#')));
        let mut header = |key: &str| -> Result<String, TectumError> {
            let line = lines
                .next()
                .ok_or_else(|| TectumError::Format(format!("missing `{key}` record")))??;
            line.strip_prefix(key)
                .map(|v| v.trim().to_string())
                .ok_or_else(|| TectumError::Format(format!("expected `{key}`, found `{line}`")))
        };
        let parse = |s: String| -> Result<f64, TectumError> {
            s.parse()
                .map_err(|_| TectumError::Format(format!("bad number `{s}`")))
        };
        let len: usize = header("features")?
            .parse()
            .map_err(|_| TectumError::Format("bad feature count".into()))?;
        let ridge_lambda = parse(header("lambda")?)?;
        let bias = parse(header("bias")?)?;
        let training_residual = parse(header("residual")?)?;
        let trained = header("trained")? == "true";

        let mut d = Decoder::untrained(len);
        d.ridge_lambda = ridge_lambda;
        d.bias = bias;
        d.training_residual = training_residual;
        d.trained = trained;
        let mut seen = 0;
        for line in lines {
            let line = line?;
            let cols: Vec<&str> = line.split_whitespace().collect();
            if cols.len() != 4 {
                return Err(TectumError::Format(format!(
                    "expected 4 columns in `{line}`"
                )));
            }
            let i: usize = cols[0]
                .parse()
                .map_err(|_| TectumError::Format(format!("bad index in `{line}`")))?;
            if i != seen || i >= len {
                return Err(TectumError::Format(format!("unexpected row index {i}")));
            }
            d.weights[i] = parse(cols[1].into())?;
            d.feature_mean[i] = parse(cols[2].into())?;
            d.feature_scale[i] = parse(cols[3].into())?;
            seen += 1;
        }
        if seen != len {
            return Err(TectumError::Format(format!(
                "{seen} rows for {len} features"
            )));
        }
        Ok(d)
    }
}

/// Ridge least-squares fit of positions from features; the intercept is not
/// penalised. Deterministic for a fixed sample order.
pub fn fit_decoder(samples: &[(FeatureVector, f64)], lambda: f64) -> Result<Decoder, TectumError> {
    if samples.len() < 2 {
        return Err(TectumError::BadTrainingSet(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(TectumError::BadTrainingSet(format!(
            "ridge lambda must be >= 0, got {lambda}"
        )));
    }
    let len = samples[0].0.len();
    if let Some((f, _)) = samples.iter().find(|(f, _)| f.len() != len) {
        return Err(TectumError::LengthMismatch {
            expected: len,
            found: f.len(),
        });
    }
    let rows: Vec<&[f64]> = samples.iter().map(|(f, _)| f.as_slice()).collect();
    let targets: Vec<f64> = samples.iter().map(|(_, p)| *p).collect();
    let (weights, bias) =
        ridge::ridge_fit(&rows, &targets, lambda).ok_or(TectumError::SingularSystem)?;

    let n = samples.len() as f64;
    let mut mean = vec![0.0; len];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(r.iter()) {
            *m += v / n;
        }
    }
    let mut scale = vec![0.0; len];
    for r in &rows {
        for ((s, v), m) in scale.iter_mut().zip(r.iter()).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    for (s, m) in scale.iter_mut().zip(&mean) {
        *s = s.sqrt().max(1e-9 * (1.0 + m.abs()));
    }

    let mut decoder = Decoder {
        weights,
        bias,
        ridge_lambda: lambda,
        feature_mean: mean,
        feature_scale: scale,
        training_residual: 0.0,
        trained: true,
    };
    let sse: f64 = rows
        .iter()
        .zip(&targets)
        .map(|(r, t)| (decoder.predict(r) - t).powi(2))
        .sum();
    decoder.training_residual = (sse / n).sqrt();
    Ok(decoder)
}

/// Position and novelty-based confidence for one feature vector.
pub fn decode_position(decoder: &Decoder, f: &FeatureVector) -> Result<(f64, f64), TectumError> {
    if !decoder.trained {
        return Err(TectumError::Untrained);
    }
    if f.len() != decoder.feature_len() {
        return Err(TectumError::LengthMismatch {
            expected: decoder.feature_len(),
            found: f.len(),
        });
    }
    Ok((
        decoder.predict(f.as_slice()),
        decoder.confidence(f.as_slice()),
    ))
}

/// Burst statistics over the classification window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BurstStats {
    /// Burst events per neuron in the window, CMS / CLS / LS.
    pub rates: [f64; 3],
    pub cls_high_band: bool,
    pub self_eod_on: bool,
}

/// Minimum rate for each class to be reported. A class's score is its rate
/// divided by its floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierThresholds {
    pub chirp_floor: f64,
    pub object_floor: f64,
    pub external_floor: f64,
}

/// Rule table:
/// * high-band rate (LS, plus CLS while it sits in its high band) drives
///   `ConspecificChirp`;
/// * low-band rate (CMS, plus CLS in its low band) drives `ObjectEcho` with
///   the own discharge on, `ExternalLowFreqField` with it off;
/// * the larger score wins, ties go to the chirp; nothing at or above its
///   floor is `Quiet`.
pub fn classify_event(stats: &BurstStats, thresholds: &ClassifierThresholds) -> EventKind {
    let [cms, cls, ls] = stats.rates;
    let (high, low) = if stats.cls_high_band {
        (ls + cls, cms)
    } else {
        (ls, cms + cls)
    };
    let chirp_score = high / thresholds.chirp_floor;
    let (low_kind, low_score) = if stats.self_eod_on {
        (EventKind::ObjectEcho, low / thresholds.object_floor)
    } else {
        (
            EventKind::ExternalLowFreqField,
            low / thresholds.external_floor,
        )
    };
    if chirp_score >= 1.0 && chirp_score >= low_score {
        EventKind::ConspecificChirp
    } else if low_score >= 1.0 {
        low_kind
    } else {
        EventKind::Quiet
    }
}

/// Burst events per neuron for each map.
pub fn burst_rates(counts: [usize; 3], neuron_counts: [usize; 3]) -> [f64; 3] {
    std::array::from_fn(|i| counts[i] as f64 / neuron_counts[i].max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn activity(segment: SegmentId, tick: u64, n: usize, v: f64) -> MapActivity {
        MapActivity {
            segment,
            tick,
            time: tick as f64,
            activity: vec![v; n],
        }
    }

    fn thresholds() -> ClassifierThresholds {
        ClassifierThresholds {
            chirp_floor: 0.05,
            object_floor: 0.1,
            external_floor: 0.1,
        }
    }

    #[test]
    fn features_concatenate_in_fixed_order() {
        let f = assemble_features(
            &activity(SegmentId::Cms, 3, 64, 0.0),
            &activity(SegmentId::Cls, 3, 32, 0.0),
            &activity(SegmentId::Ls, 3, 16, 0.0),
            [0.0; 3],
        )
        .unwrap();
        assert_eq!(f.len(), 115);
        assert!(f.as_slice().iter().all(|&v| v == 0.0));

        let f = assemble_features(
            &activity(SegmentId::Cms, 0, 2, 1.0),
            &activity(SegmentId::Cls, 0, 1, 2.0),
            &activity(SegmentId::Ls, 0, 1, 3.0),
            [4.0, 5.0, 6.0],
        )
        .unwrap();
        assert_eq!(f.0, vec![1.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn features_reject_swapped_or_stale_maps() {
        let cms = activity(SegmentId::Cms, 1, 4, 0.0);
        let cls = activity(SegmentId::Cls, 1, 2, 0.0);
        let ls = activity(SegmentId::Ls, 1, 1, 0.0);
        assert!(matches!(
            assemble_features(&cls, &cms, &ls, [0.0; 3]),
            Err(TectumError::SegmentMismatch { slot: 0, .. })
        ));
        let stale = activity(SegmentId::Ls, 0, 1, 0.0);
        assert!(matches!(
            assemble_features(&cms, &cls, &stale, [0.0; 3]),
            Err(TectumError::TickMismatch(_))
        ));
    }

    fn linear_samples() -> Vec<(FeatureVector, f64)> {
        (0..40)
            .map(|i| {
                let x = i as f64 * 0.005;
                let f = vec![x, (7.0 * x).sin(), x * x, (x * 13.0).cos()];
                (FeatureVector(f), x)
            })
            .collect()
    }

    #[test]
    fn exact_linear_recovery() {
        let d = fit_decoder(&linear_samples(), 0.0).unwrap();
        assert!(d.training_residual() < 1e-8);
        for (f, x) in linear_samples() {
            let (p, c) = d.decode(&f).unwrap();
            assert!((p - x).abs() <= d.training_residual() + 1e-12);
            assert!(c > 0.0 && c <= 1.0);
        }
    }

    #[test]
    fn huge_ridge_collapses_to_mean() {
        let samples = linear_samples();
        let d = fit_decoder(&samples, 1e12).unwrap();
        assert!(d.weights().iter().all(|w| w.abs() < 1e-9));
        let mean = samples.iter().map(|(_, x)| x).sum::<f64>() / samples.len() as f64;
        let (p, _) = d.decode(&samples[3].0).unwrap();
        assert!((p - mean).abs() < 1e-6);
    }

    #[test]
    fn zero_features_decode_to_bias() {
        let d = fit_decoder(&linear_samples(), 1e-3).unwrap();
        let (p, _) = d.decode(&FeatureVector(vec![0.0; 4])).unwrap();
        assert_eq!(p, d.bias());
    }

    #[test]
    fn fit_errors() {
        let one = vec![linear_samples().remove(0)];
        assert!(matches!(
            fit_decoder(&one, 0.0),
            Err(TectumError::BadTrainingSet(_))
        ));
        let dup: Vec<(FeatureVector, f64)> = (0..5)
            .map(|i| (FeatureVector(vec![i as f64, 2.0 * i as f64]), i as f64))
            .collect();
        assert!(matches!(
            fit_decoder(&dup, 0.0),
            Err(TectumError::SingularSystem)
        ));
        assert!(matches!(
            Decoder::untrained(4).decode(&FeatureVector(vec![0.0; 4])),
            Err(TectumError::Untrained)
        ));
    }

    #[test]
    fn fitting_is_bitwise_deterministic() {
        let a = fit_decoder(&linear_samples(), 1e-4).unwrap();
        let b = fit_decoder(&linear_samples(), 1e-4).unwrap();
        assert_eq!(a, b);
        let bits = |d: &Decoder| d.weights().iter().map(|w| w.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn decoder_file_round_trip() {
        let d = fit_decoder(&linear_samples(), 1e-4).unwrap();
        let mut buf = Vec::new();
        d.write_to(&mut buf).unwrap();
        let back = Decoder::read_from(buf.as_slice()).unwrap();
        assert_eq!(back, d);
        assert!(Decoder::read_from(&b"features 2\nlambda 0\n"[..]).is_err());
    }

    #[test]
    fn classifier_examples() {
        let quiet = BurstStats {
            rates: [0.0; 3],
            cls_high_band: false,
            self_eod_on: true,
        };
        assert_eq!(classify_event(&quiet, &thresholds()), EventKind::Quiet);

        let object = BurstStats {
            rates: [0.5, 0.2, 0.0],
            ..quiet
        };
        assert_eq!(
            classify_event(&object, &thresholds()),
            EventKind::ObjectEcho
        );
        let external = BurstStats {
            self_eod_on: false,
            ..object
        };
        assert_eq!(
            classify_event(&external, &thresholds()),
            EventKind::ExternalLowFreqField
        );
        let chirp = BurstStats {
            rates: [0.2, 0.3, 0.2],
            cls_high_band: true,
            self_eod_on: true,
        };
        assert_eq!(
            classify_event(&chirp, &thresholds()),
            EventKind::ConspecificChirp
        );
        // equal scores resolve to the chirp
        let tie = BurstStats {
            rates: [0.2, 0.0, 0.1],
            cls_high_band: false,
            self_eod_on: true,
        };
        assert_eq!(
            classify_event(&tie, &thresholds()),
            EventKind::ConspecificChirp
        );
    }

    proptest! {
        #[test]
        fn classifier_is_total(
            cms in 0.0f64..5.0, cls in 0.0f64..5.0, ls in 0.0f64..5.0,
            high: bool, eod: bool,
        ) {
            let s = BurstStats { rates: [cms, cls, ls], cls_high_band: high, self_eod_on: eod };
            let k = classify_event(&s, &thresholds());
            prop_assert!(EventKind::ALL.contains(&k));
            prop_assert_eq!(k, classify_event(&s, &thresholds()));
        }
    }
}
