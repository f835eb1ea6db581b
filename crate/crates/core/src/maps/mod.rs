//! Three parallel population maps fed by identical copies of the sensor drive.
//!
//! Each map pools neighbouring sensors through triangular receptive fields,
//! band-pass filters the pooled drive at the sample rate, and rectifies. The
//! maps differ in size, receptive-field width and temporal band; the CLS band
//! can be switched at run time.

mod burst;
mod filter;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pallium::Context;
use crate::sensing::{Payload, SensorReport};

pub use burst::{burst_encode, spike_ticks, BurstCoderParams, BurstEvent};
pub use filter::{BandPass, FilterState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapsError {
    #[error("map configuration does not fit the sensor array: {0}")]
    ConfigMismatch(String),
    #[error("invalid map configuration: {0}")]
    InvalidConfig(String),
    #[error("only the CLS map can be retuned, not {0}")]
    NotCls(SegmentId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegmentId {
    #[serde(rename = "cms")]
    Cms,
    #[serde(rename = "cls")]
    Cls,
    #[serde(rename = "ls")]
    Ls,
}

impl SegmentId {
    pub const ALL: [SegmentId; 3] = [SegmentId::Cms, SegmentId::Cls, SegmentId::Ls];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentId::Cms => "CMS",
            SegmentId::Cls => "CLS",
            SegmentId::Ls => "LS",
        })
    }
}

/// Pass band in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Band {
    pub low: f64,
    pub high: f64,
}

impl Band {
    pub const fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    /// Geometric centre frequency.
    pub fn center(&self) -> f64 {
        (self.low * self.high).sqrt()
    }
}

impl From<[f64; 2]> for Band {
    fn from(v: [f64; 2]) -> Self {
        Band::new(v[0], v[1])
    }
}

impl From<Band> for [f64; 2] {
    fn from(b: Band) -> Self {
        [b.low, b.high]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub segment: SegmentId,
    pub neuron_count: usize,
    /// Receptive-field width in sensors (odd).
    pub rf_width: usize,
    pub band: Band,
    pub gain: f64,
}

impl MapConfig {
    pub fn validate(&self, nyquist: f64) -> Result<(), MapsError> {
        let name = self.segment;
        if self.neuron_count == 0 {
            return Err(MapsError::InvalidConfig(format!(
                "{name}: neuron_count must be >= 1"
            )));
        }
        if self.rf_width == 0 || self.rf_width.is_multiple_of(2) {
            return Err(MapsError::InvalidConfig(format!(
                "{name}: rf_width must be an odd integer >= 1, got {}",
                self.rf_width
            )));
        }
        let Band { low, high } = self.band;
        if !(0.0 < low && low < high && high < nyquist) {
            return Err(MapsError::InvalidConfig(format!(
                "{name}: band must satisfy 0 < low < high < Nyquist ({nyquist} Hz), got ({low}, {high})"
            )));
        }
        if !(self.gain > 0.0) {
            return Err(MapsError::InvalidConfig(format!(
                "{name}: gain must be > 0"
            )));
        }
        Ok(())
    }
}

/// Checks each map on its own plus the size ordering CMS > CLS > LS.
pub fn validate_map_set(configs: &[MapConfig; 3], nyquist: f64) -> Result<(), MapsError> {
    for (cfg, expected) in configs.iter().zip(SegmentId::ALL) {
        if cfg.segment != expected {
            return Err(MapsError::InvalidConfig(format!(
                "map slot {expected} holds a {} configuration",
                cfg.segment
            )));
        }
        cfg.validate(nyquist)?;
    }
    let [cms, cls, ls] = configs;
    if !(cms.neuron_count > cls.neuron_count && cls.neuron_count > ls.neuron_count) {
        return Err(MapsError::InvalidConfig(format!(
            "size ordering violated: need neuron_count(CMS) > neuron_count(CLS) > neuron_count(LS), got {} / {} / {}",
            cms.neuron_count, cls.neuron_count, ls.neuron_count
        )));
    }
    Ok(())
}

/// CLS pass bands selected by behavioural context.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClsBands {
    /// Foraging / electrolocation band.
    pub low: Band,
    /// Communication band.
    pub high: Band,
}

impl ClsBands {
    pub fn for_context(&self, context: Context) -> Band {
        match context {
            Context::Communication => self.high,
            Context::ActiveElectrolocation | Context::PassiveElectrolocation => self.low,
        }
    }
}

pub fn retune_cls(
    config: &MapConfig,
    context: Context,
    bands: &ClsBands,
) -> Result<MapConfig, MapsError> {
    if config.segment != SegmentId::Cls {
        return Err(MapsError::NotCls(config.segment));
    }
    Ok(MapConfig {
        band: bands.for_context(context),
        ..*config
    })
}

/// What one sensor feeds the maps during a tick.
#[derive(Debug, Clone, PartialEq)]
pub enum SensorDrive {
    /// Held constant across the tick.
    Level(f64),
    /// Unit impulses at these sample indices of the tick.
    Impulses(Vec<usize>),
}

impl SensorDrive {
    /// Mean value over a tick of `samples` samples.
    pub fn mean(&self, samples: usize) -> f64 {
        match self {
            SensorDrive::Level(v) => *v,
            SensorDrive::Impulses(e) => e.len() as f64 / samples.max(1) as f64,
        }
    }
}

/// Drive a sensor contributes for one tick. Envelopes and wavelet
/// approximations are held; transient events keep their sample timing.
pub fn payload_drive(payload: &Payload) -> SensorDrive {
    match payload {
        Payload::Envelope(v) => SensorDrive::Level(*v),
        Payload::Events(e) => SensorDrive::Impulses(e.clone()),
        Payload::Coefficients(c) => SensorDrive::Level(c.approximation()[0]),
    }
}

/// One copy of the per-sensor drive for each map, in CMS, CLS, LS order.
pub fn trifurcate(report: &SensorReport) -> [Vec<SensorDrive>; 3] {
    let drive: Vec<SensorDrive> = report.payloads.iter().map(payload_drive).collect();
    [drive.clone(), drive.clone(), drive]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapActivity {
    pub segment: SegmentId,
    pub tick: u64,
    pub time: f64,
    pub activity: Vec<f64>,
}

#[derive(Debug, Clone)]
struct ReceptiveField {
    start: usize,
    weights: Vec<f64>,
}

impl ReceptiveField {
    fn range(&self) -> Range<usize> {
        self.start..self.start + self.weights.len()
    }

    fn pool(&self, drive: &[f64]) -> f64 {
        drive[self.range()]
            .iter()
            .zip(&self.weights)
            .map(|(d, w)| d * w)
            .sum()
    }
}

/// Lays out `neurons` centres evenly from the first to the last sensor and
/// gives each a triangular kernel over the `width` sensors nearest to it.
fn receptive_fields(neurons: usize, sensors: usize, width: usize) -> Vec<ReceptiveField> {
    (0..neurons)
        .map(|j| {
            let center = if neurons == 1 {
                (sensors - 1) as f64 / 2.0
            } else {
                j as f64 * (sensors - 1) as f64 / (neurons - 1) as f64
            };
            let start = (center.round() as isize - (width as isize - 1) / 2)
                .clamp(0, (sensors - width) as isize) as usize;
            // support extends one sensor past the farthest pooled one so every
            // pooled weight stays positive, also for clamped edge fields
            let farthest = (start as f64 - center)
                .abs()
                .max((start + width - 1) as f64 - center);
            let half_support = farthest + 1.0;
            let mut weights: Vec<f64> = (start..start + width)
                .map(|i| 1.0 - (i as f64 - center).abs() / half_support)
                .collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            ReceptiveField { start, weights }
        })
        .collect()
}

/// Stateful map: receptive fields plus one band-pass filter state per neuron.
#[derive(Debug, Clone)]
pub struct MapLayer {
    config: MapConfig,
    fields: Vec<ReceptiveField>,
    sensors: usize,
    filter: BandPass,
    states: Vec<FilterState>,
    sample_rate: f64,
    samples_per_tick: usize,
    primed: bool,
    /// Mean pooled input of each neuron over the last tick.
    last_input: Vec<f64>,
    ticks: u64,
}

impl MapLayer {
    pub fn new(
        config: MapConfig,
        sensor_count: usize,
        sample_rate: f64,
        samples_per_tick: usize,
    ) -> Result<Self, MapsError> {
        config.validate(sample_rate / 2.0)?;
        if config.rf_width > sensor_count {
            return Err(MapsError::ConfigMismatch(format!(
                "{}: rf_width {} exceeds {sensor_count} sensors",
                config.segment, config.rf_width
            )));
        }
        let fields = receptive_fields(config.neuron_count, sensor_count, config.rf_width);
        let mut cover = vec![0usize; sensor_count];
        for f in &fields {
            cover[f.range()].iter_mut().for_each(|c| *c += 1);
        }
        if let Some(gap) = cover.iter().position(|&c| c == 0) {
            return Err(MapsError::ConfigMismatch(format!(
                "{}: sensor {gap} is outside every receptive field ({} neurons of width {})",
                config.segment, config.neuron_count, config.rf_width
            )));
        }
        Ok(Self {
            filter: BandPass::design(config.band, sample_rate),
            states: vec![FilterState::default(); config.neuron_count],
            fields,
            sensors: sensor_count,
            config,
            sample_rate,
            samples_per_tick,
            primed: false,
            last_input: vec![0.0; config.neuron_count],
            ticks: 0,
        })
    }

    pub fn config(&self) -> &MapConfig {
        &self.config
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors
    }

    /// Sensor indices pooled by `neuron`.
    pub fn receptive_field(&self, neuron: usize) -> Range<usize> {
        self.fields[neuron].range()
    }

    /// Number of neurons whose receptive field contains each sensor.
    pub fn coverage(&self) -> Vec<usize> {
        let mut cover = vec![0usize; self.sensors];
        for f in &self.fields {
            cover[f.range()].iter_mut().for_each(|c| *c += 1);
        }
        cover
    }

    /// Switches the CLS pass band. Filters restart settled on each neuron's
    /// mean input over the last tick, so a retune alone does not make the
    /// map fire.
    pub fn retune(&mut self, band: Band) -> Result<(), MapsError> {
        if self.config.segment != SegmentId::Cls {
            return Err(MapsError::NotCls(self.config.segment));
        }
        let next = MapConfig {
            band,
            ..self.config
        };
        next.validate(self.sample_rate / 2.0)?;
        self.config = next;
        self.filter = BandPass::design(band, self.sample_rate);
        for (state, &u) in self.states.iter_mut().zip(&self.last_input) {
            *state = FilterState::settled(&self.filter, u);
        }
        Ok(())
    }

    /// Advances one tick with every sensor's drive held constant.
    pub fn respond(&mut self, input: &[f64], time: f64) -> Result<MapActivity, MapsError> {
        let drive: Vec<SensorDrive> = input.iter().map(|&v| SensorDrive::Level(v)).collect();
        self.respond_drive(&drive, time)
    }

    /// Advances one tick. The first tick primes each filter as if its mean
    /// drive had always been present. Impulse indices past the end of the
    /// tick are ignored.
    pub fn respond_drive(
        &mut self,
        input: &[SensorDrive],
        time: f64,
    ) -> Result<MapActivity, MapsError> {
        let expected = self.sensors;
        if input.len() != expected {
            return Err(MapsError::ConfigMismatch(format!(
                "{}: {} drive values for a map spanning {expected} sensors",
                self.config.segment,
                input.len()
            )));
        }
        let samples = self.samples_per_tick;
        let levels: Vec<f64> = input
            .iter()
            .map(|d| match d {
                SensorDrive::Level(v) => *v,
                SensorDrive::Impulses(_) => 0.0,
            })
            .collect();
        if !self.primed {
            let means: Vec<f64> = input.iter().map(|d| d.mean(samples)).collect();
            for (state, field) in self.states.iter_mut().zip(&self.fields) {
                *state = FilterState::settled(&self.filter, field.pool(&means));
            }
            self.primed = true;
        }
        let n = samples as f64;
        let mut trace = vec![0.0; samples];
        let activity = self
            .states
            .iter_mut()
            .zip(&self.fields)
            .zip(self.last_input.iter_mut())
            .map(|((state, field), last)| {
                trace.fill(field.pool(&levels));
                for (s, w) in field.range().zip(&field.weights) {
                    if let SensorDrive::Impulses(events) = &input[s] {
                        for &e in events.iter().filter(|&&e| e < samples) {
                            trace[e] += w;
                        }
                    }
                }
                *last = trace.iter().sum::<f64>() / n;
                let acc: f64 = trace
                    .iter()
                    .map(|&u| state.step(&self.filter, u).max(0.0))
                    .sum();
                self.config.gain * acc / n
            })
            .collect();
        let tick = self.ticks;
        self.ticks += 1;
        Ok(MapActivity {
            segment: self.config.segment,
            tick,
            time,
            activity,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::{WaveletCoefficients, WaveletFamily, WaveletSpec};

    const FS: f64 = 20_000.0;

    fn cfg(segment: SegmentId, neuron_count: usize, rf_width: usize, band: Band) -> MapConfig {
        MapConfig {
            segment,
            neuron_count,
            rf_width,
            band,
            gain: 1.0,
        }
    }

    fn defaults() -> [MapConfig; 3] {
        [
            cfg(SegmentId::Cms, 64, 3, Band::new(1.0, 40.0)),
            cfg(SegmentId::Cls, 32, 5, Band::new(20.0, 80.0)),
            cfg(SegmentId::Ls, 16, 7, Band::new(80.0, 300.0)),
        ]
    }

    fn bands() -> ClsBands {
        ClsBands {
            low: Band::new(20.0, 80.0),
            high: Band::new(200.0, 400.0),
        }
    }

    #[test]
    fn size_ordering_is_enforced() {
        assert!(validate_map_set(&defaults(), FS / 2.0).is_ok());
        let mut bad = defaults();
        bad[2].neuron_count = 32;
        let err = validate_map_set(&bad, FS / 2.0).unwrap_err();
        assert!(err.to_string().contains("size ordering"));
        let mut bad = defaults();
        bad[1].band = Band::new(200.0, 12_000.0);
        assert!(validate_map_set(&bad, FS / 2.0).is_err());
        let mut bad = defaults();
        bad[0].rf_width = 4;
        assert!(validate_map_set(&bad, FS / 2.0).is_err());
    }

    #[test]
    fn default_maps_cover_every_sensor() {
        for c in defaults() {
            let layer = MapLayer::new(c, 20, FS, 256).unwrap();
            let cover = layer.coverage();
            assert!(cover.iter().all(|&n| n >= 1), "{c:?}");
            if c.segment == SegmentId::Cms {
                assert!(cover[1..19].iter().all(|&n| n >= 2));
            }
            for j in 0..c.neuron_count {
                assert_eq!(layer.receptive_field(j).len(), c.rf_width);
            }
        }
    }

    #[test]
    fn sparse_map_is_rejected() {
        let c = cfg(SegmentId::Ls, 2, 3, Band::new(80.0, 300.0));
        assert!(matches!(
            MapLayer::new(c, 20, FS, 256),
            Err(MapsError::ConfigMismatch(_))
        ));
        let wide = cfg(SegmentId::Ls, 4, 21, Band::new(80.0, 300.0));
        assert!(matches!(
            MapLayer::new(wide, 20, FS, 256),
            Err(MapsError::ConfigMismatch(_))
        ));
    }

    #[test]
    fn zero_and_dc_input_give_zero_activity() {
        for c in defaults() {
            let mut layer = MapLayer::new(c, 20, FS, 256).unwrap();
            assert!(layer
                .respond(&[0.0; 20], 0.0)
                .unwrap()
                .activity
                .iter()
                .all(|&a| a == 0.0));
            let mut layer = MapLayer::new(c, 20, FS, 256).unwrap();
            for t in 0..5 {
                let a = layer.respond(&[0.8; 20], t as f64).unwrap();
                assert!(a.activity.iter().all(|&v| v.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn dc_after_a_step_settles_toward_zero() {
        let mut layer = MapLayer::new(defaults()[1], 20, FS, 256).unwrap();
        layer.respond(&[0.0; 20], 0.0).unwrap();
        let first = layer.respond(&[1.0; 20], 1.0).unwrap();
        let mut last = first.clone();
        for t in 2..60 {
            last = layer.respond(&[1.0; 20], t as f64).unwrap();
        }
        let peak = first.activity.iter().cloned().fold(0.0, f64::max);
        let tail = last.activity.iter().cloned().fold(0.0, f64::max);
        assert!(peak > 0.01 && tail < 1e-3 * peak);
    }

    #[test]
    fn impulse_support_matches_receptive_fields() {
        for c in defaults() {
            for sensor in [0, 7, 19] {
                let mut layer = MapLayer::new(c, 20, FS, 256).unwrap();
                layer.respond(&[0.0; 20], 0.0).unwrap();
                let mut input = [0.0; 20];
                input[sensor] = 1.0;
                let a = layer.respond(&input, 1.0).unwrap();
                for j in 0..c.neuron_count {
                    let covers = layer.receptive_field(j).contains(&sensor);
                    assert_eq!(
                        a.activity[j] > 0.0,
                        covers,
                        "{c:?} neuron {j} sensor {sensor}"
                    );
                }
            }
        }
    }

    #[test]
    fn activity_ignores_inputs_outside_field() {
        let c = defaults()[0];
        let mut a = MapLayer::new(c, 20, FS, 256).unwrap();
        let mut b = MapLayer::new(c, 20, FS, 256).unwrap();
        let base: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut other = base.clone();
        other[15] += 3.0;
        for t in 0..3 {
            let x = a.respond(&base, t as f64).unwrap();
            let y = b
                .respond(if t == 0 { &base } else { &other }, t as f64)
                .unwrap();
            for j in 0..c.neuron_count {
                if !a.receptive_field(j).contains(&15) {
                    assert_eq!(x.activity[j], y.activity[j]);
                }
            }
        }
    }

    #[test]
    fn in_band_drive_bursts_more_than_out_of_band() {
        // CMS band (1, 40) Hz; drive modulated at ~6 Hz vs ~0.05 Hz (quasi-static)
        let c = defaults()[0];
        let params = BurstCoderParams {
            spike_threshold: 0.02,
            refractory: 0,
            burst_min_spikes: 2,
            burst_window: 4,
        };
        let tick_dt = 256.0 / FS;
        let count_events = |freq: f64| {
            let mut layer = MapLayer::new(c, 20, FS, 256).unwrap();
            let history: Vec<MapActivity> = (0..200)
                .map(|t| {
                    let u = 0.1 * (2.0 * std::f64::consts::PI * freq * t as f64 * tick_dt).sin();
                    layer.respond(&[u; 20], t as f64 * tick_dt).unwrap()
                })
                .collect();
            burst_encode(&history, &params).len()
        };
        let in_band = count_events(6.3);
        let out_band = count_events(0.05);
        assert!(in_band > out_band, "{in_band} vs {out_band}");
    }

    #[test]
    fn retune_under_steady_drive_stays_silent() {
        let mut cls = MapLayer::new(defaults()[1], 20, FS, 256).unwrap();
        let drive = vec![1.3; 20];
        cls.respond(&drive, 0.0).unwrap();
        cls.retune(Band::new(200.0, 400.0)).unwrap();
        let a = cls.respond(&drive, 0.0128).unwrap();
        assert!(a.activity.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn retune_examples() {
        let cls = defaults()[1];
        let comm = retune_cls(&cls, Context::Communication, &bands()).unwrap();
        assert_eq!(comm.band, Band::new(200.0, 400.0));
        assert_eq!(
            retune_cls(&comm, Context::Communication, &bands()).unwrap(),
            comm
        );
        let back = retune_cls(&comm, Context::ActiveElectrolocation, &bands()).unwrap();
        assert_eq!(back, cls);
        assert_eq!(
            retune_cls(&defaults()[0], Context::Communication, &bands()),
            Err(MapsError::NotCls(SegmentId::Cms))
        );
        let mut ls = MapLayer::new(defaults()[2], 20, FS, 256).unwrap();
        assert!(ls.retune(Band::new(200.0, 400.0)).is_err());
    }

    #[test]
    fn trifurcation_copies_drive() {
        let spec = WaveletSpec::new(WaveletFamily::Haar, 2);
        let report = SensorReport {
            time: 0.0,
            window: 12,
            payloads: vec![
                Payload::Envelope(0.4),
                Payload::Events(vec![3, 9, 11]),
                Payload::Coefficients(WaveletCoefficients {
                    spec,
                    data: vec![1.5, -0.5, 0.1, 0.2, 0.0, 0.0, 0.3, 0.0],
                }),
            ],
        };
        let [a, b, c] = trifurcate(&report);
        assert_eq!(
            a,
            vec![
                SensorDrive::Level(0.4),
                SensorDrive::Impulses(vec![3, 9, 11]),
                SensorDrive::Level(1.5)
            ]
        );
        assert_eq!(a[1].mean(report.window), 0.25);
        assert_eq!(a, b);
        assert_eq!(b, c);
        assert_eq!(a.len() + b.len() + c.len(), 3 * report.payloads.len());

        let zero = SensorReport {
            time: 0.0,
            window: 4,
            payloads: vec![Payload::Envelope(0.0); 4],
        };
        assert!(trifurcate(&zero)
            .iter()
            .all(|v| v.iter().all(|x| *x == SensorDrive::Level(0.0))));
    }
}
