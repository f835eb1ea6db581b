//! Active sensor front-end.
//!
//! Each sensor is either an amplitude receptor or a transient (phase)
//! receptor. The representation each class sends downstream is switchable at
//! run time: an RMS envelope, a list of onset events, or a wavelet
//! decomposition of the window.

mod wavelet;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{SensorFrame, SensorGeometry};
use crate::pallium::TuningCommand;

pub use wavelet::{
    wavelet_decompose, wavelet_reconstruct, WaveletCoefficients, WaveletFamily, WaveletSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensingError {
    #[error("bad window length: {0}")]
    BadWindowLength(String),
    #[error("coefficients were produced with {found:?}, not {expected:?}")]
    SpecMismatch {
        expected: WaveletSpec,
        found: WaveletSpec,
    },
    #[error("unknown wavelet family `{0}`")]
    UnknownWaveletFamily(String),
    #[error("unknown coding scheme `{0}`")]
    UnknownScheme(String),
    #[error("invalid sensor state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptorKind {
    Amplitude,
    Transient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodingScheme {
    EnvelopeRate,
    TransientEvent,
    WaveletCoefficients,
}

impl CodingScheme {
    pub const ALL: [CodingScheme; 3] = [
        CodingScheme::EnvelopeRate,
        CodingScheme::TransientEvent,
        CodingScheme::WaveletCoefficients,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            CodingScheme::EnvelopeRate => "envelope_rate",
            CodingScheme::TransientEvent => "transient_event",
            CodingScheme::WaveletCoefficients => "wavelet_coefficients",
        }
    }
}

impl fmt::Display for CodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodingScheme {
    type Err = SensingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| SensingError::UnknownScheme(s.to_string()))
    }
}

/// RMS of the trailing `window` samples.
pub fn encode_amplitude(samples: &[f64], window: usize) -> Result<f64, SensingError> {
    if window == 0 || samples.len() < window {
        return Err(SensingError::BadWindowLength(format!(
            "envelope window {window} does not fit {} samples",
            samples.len()
        )));
    }
    let tail = &samples[samples.len() - window..];
    let power = tail.iter().map(|v| v * v).sum::<f64>() / window as f64;
    Ok(power.sqrt())
}

/// Indices whose first difference exceeds `threshold` in magnitude.
pub fn encode_transient(samples: &[f64], threshold: f64) -> Vec<usize> {
    samples
        .windows(2)
        .enumerate()
        .filter(|(_, w)| (w[1] - w[0]).abs() > threshold)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Which representation each receptor class currently emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeAssignment {
    pub amplitude: CodingScheme,
    pub transient: CodingScheme,
}

impl SchemeAssignment {
    pub fn for_kind(&self, kind: ReceptorKind) -> CodingScheme {
        match kind {
            ReceptorKind::Amplitude => self.amplitude,
            ReceptorKind::Transient => self.transient,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    geometry: Arc<SensorGeometry>,
    kinds: Vec<ReceptorKind>,
    schemes: SchemeAssignment,
    wavelet: WaveletSpec,
    transient_threshold: f64,
    envelope_window: usize,
    window_len: usize,
}

impl SensorState {
    pub fn new(
        geometry: Arc<SensorGeometry>,
        kinds: Vec<ReceptorKind>,
        schemes: SchemeAssignment,
        wavelet: WaveletSpec,
        transient_threshold: f64,
        envelope_window: usize,
        window_len: usize,
    ) -> Result<Self, SensingError> {
        if kinds.len() != geometry.count() {
            return Err(SensingError::InvalidState(format!(
                "{} receptor kinds for {} sensors",
                kinds.len(),
                geometry.count()
            )));
        }
        if !(transient_threshold > 0.0) {
            return Err(SensingError::InvalidState(
                "transient threshold must be > 0".into(),
            ));
        }
        if envelope_window < 2 || envelope_window > window_len {
            return Err(SensingError::InvalidState(format!(
                "envelope window must lie in [2, {window_len}], got {envelope_window}"
            )));
        }
        wavelet.check_window(window_len)?;
        Ok(Self {
            geometry,
            kinds,
            schemes,
            wavelet,
            transient_threshold,
            envelope_window,
            window_len,
        })
    }

    pub fn geometry(&self) -> &SensorGeometry {
        &self.geometry
    }

    pub fn kinds(&self) -> &[ReceptorKind] {
        &self.kinds
    }

    pub fn schemes(&self) -> SchemeAssignment {
        self.schemes
    }

    pub fn wavelet(&self) -> WaveletSpec {
        self.wavelet
    }

    pub fn transient_threshold(&self) -> f64 {
        self.transient_threshold
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn envelope_window(&self) -> usize {
        self.envelope_window
    }
}

/// Returns a new state with the fields named in `cmd` replaced. The caller
/// swaps the whole state between ticks, so a report never mixes configurations.
pub fn apply_tuning(state: &SensorState, cmd: &TuningCommand) -> Result<SensorState, SensingError> {
    let mut next = state.clone();
    if let Some(name) = &cmd.wavelet_family {
        next.wavelet.family = name.parse()?;
    }
    if let Some(name) = &cmd.amplitude_scheme {
        next.schemes.amplitude = name.parse()?;
    }
    if let Some(name) = &cmd.transient_scheme {
        next.schemes.transient = name.parse()?;
    }
    if let Some(threshold) = cmd.transient_threshold {
        if !(threshold > 0.0) {
            return Err(SensingError::InvalidState(
                "transient threshold must be > 0".into(),
            ));
        }
        next.transient_threshold = threshold;
    }
    Ok(next)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Envelope(f64),
    Events(Vec<usize>),
    Coefficients(WaveletCoefficients),
}

impl Payload {
    pub fn scheme(&self) -> CodingScheme {
        match self {
            Payload::Envelope(_) => CodingScheme::EnvelopeRate,
            Payload::Events(_) => CodingScheme::TransientEvent,
            Payload::Coefficients(_) => CodingScheme::WaveletCoefficients,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorReport {
    /// Time of the last frame in the window.
    pub time: f64,
    /// Samples per sensor in the encoded window.
    pub window: usize,
    pub payloads: Vec<Payload>,
}

/// Encodes one window of frames, sensor by sensor, with each sensor's active scheme.
pub fn report(state: &SensorState, frames: &[SensorFrame]) -> Result<SensorReport, SensingError> {
    if frames.len() != state.window_len {
        return Err(SensingError::BadWindowLength(format!(
            "expected {} frames, got {}",
            state.window_len,
            frames.len()
        )));
    }
    let n_sensors = state.kinds.len();
    if let Some(bad) = frames.iter().find(|f| f.samples.len() != n_sensors) {
        return Err(SensingError::InvalidState(format!(
            "frame at {} s has {} samples for {n_sensors} sensors",
            bad.time,
            bad.samples.len()
        )));
    }

    let mut history = vec![0.0; frames.len()];
    let mut payloads = Vec::with_capacity(n_sensors);
    for (i, kind) in state.kinds.iter().enumerate() {
        for (slot, frame) in history.iter_mut().zip(frames) {
            *slot = frame.samples[i];
        }
        let payload = match state.schemes.for_kind(*kind) {
            CodingScheme::EnvelopeRate => {
                Payload::Envelope(encode_amplitude(&history, state.envelope_window)?)
            }
            CodingScheme::TransientEvent => {
                Payload::Events(encode_transient(&history, state.transient_threshold))
            }
            CodingScheme::WaveletCoefficients => {
                Payload::Coefficients(wavelet_decompose(&history, state.wavelet)?)
            }
        };
        payloads.push(payload);
    }
    Ok(SensorReport {
        time: frames.last().map_or(0.0, |f| f.time),
        window: frames.len(),
        payloads,
    })
}
