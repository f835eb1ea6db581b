use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::env::{Position, Scene, SensorGeometry};
use crate::maps::{
    validate_map_set, Band, BurstCoderParams, ClsBands, MapConfig, MapLayer, SegmentId,
};
use crate::pallium::{Context, PalliumState, PolicyTable, Rule, RuleTable, TuningCommand};
use crate::sensing::{
    apply_tuning, CodingScheme, ReceptorKind, SchemeAssignment, SensorState, WaveletSpec,
};
use crate::tectum::ClassifierThresholds;

use super::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Hz.
    pub sample_rate: f64,
    /// Samples per control tick; also the sensing window.
    pub tick_samples: usize,
    /// Seconds.
    pub duration: f64,
    pub env: EnvConfig,
    pub sensing: SensingConfig,
    pub maps: MapsConfig,
    pub tectum: TectumConfig,
    pub pallium: PalliumConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub geometry: GeometryConfig,
    pub scene: Scene,
    /// Additive white sensor noise relative to the mean power of each
    /// noise-free window. Absent means noise-free.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub count: usize,
    /// Meters.
    pub pitch: f64,
    pub origin: Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    /// Indices of transient (phase) receptors; the rest are amplitude receptors.
    #[serde(default)]
    pub transient_sensors: Vec<usize>,
    pub amplitude_scheme: CodingScheme,
    pub transient_scheme: CodingScheme,
    pub wavelet: WaveletSpec,
    /// Volts per sample.
    pub transient_threshold: f64,
    /// Samples.
    pub envelope_window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub neuron_count: usize,
    pub rf_width: usize,
    pub band: Band,
    pub gain: f64,
    pub burst: BurstCoderParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapsConfig {
    pub cms: SegmentConfig,
    pub cls: SegmentConfig,
    pub ls: SegmentConfig,
    pub cls_bands: ClsBands,
    /// Ticks of map history scanned for bursts when classifying.
    pub classification_window: usize,
}

impl MapsConfig {
    pub fn segment(&self, id: SegmentId) -> &SegmentConfig {
        match id {
            SegmentId::Cms => &self.cms,
            SegmentId::Cls => &self.cls,
            SegmentId::Ls => &self.ls,
        }
    }

    pub fn map_configs(&self) -> [MapConfig; 3] {
        SegmentId::ALL.map(|id| {
            let s = self.segment(id);
            MapConfig {
                segment: id,
                neuron_count: s.neuron_count,
                rf_width: s.rf_width,
                band: s.band,
                gain: s.gain,
            }
        })
    }

    pub fn burst_params(&self) -> [BurstCoderParams; 3] {
        SegmentId::ALL.map(|id| self.segment(id).burst)
    }

    pub fn neuron_counts(&self) -> [usize; 3] {
        SegmentId::ALL.map(|id| self.segment(id).neuron_count)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TectumConfig {
    pub ridge_lambda: f64,
    pub classifier: ClassifierThresholds,
    pub training: TrainingConfig,
    /// Decoder file used by `run` to fill the decoded-position column,
    /// relative to the config file.
    #[serde(default)]
    pub decoder: Option<String>,
}

/// Hyperacuity protocol: a single object appears at a known position and the
/// map response on the following tick is the feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Lateral distance of the object from the array, meters.
    pub object_y: f64,
    pub object_radius: f64,
    pub object_contrast: f64,
    /// Trials per training grid position.
    pub repeats: usize,
    pub eval_points: usize,
    /// Evaluation spacing as a fraction of the pitch.
    pub eval_step: f64,
    /// Omit for noise-free trials.
    #[serde(default)]
    pub noise_snr_db: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PalliumConfig {
    pub initial_context: Context,
    pub gamma: f64,
    pub min_dwell: u64,
    pub rules: Vec<Rule>,
    pub policy: BTreeMap<Context, TuningCommand>,
}

impl ScenarioConfig {
    pub fn tick_duration(&self) -> f64 {
        self.tick_samples as f64 / self.sample_rate
    }

    /// Whole ticks in `duration`.
    pub fn tick_count(&self) -> u64 {
        (self.duration / self.tick_duration() + 1e-9).floor() as u64
    }

    /// First and last tick holding a sample time in `[from, to)`, or `None`
    /// when no sample falls in the interval.
    pub fn ticks_between(&self, from: f64, to: f64) -> Option<(u64, u64)> {
        // sample indices, with slack for times that sit on a sample instant
        let first = (from * self.sample_rate - 1e-6).ceil().max(0.0);
        let end = (to * self.sample_rate - 1e-6).ceil();
        if end <= first {
            return None;
        }
        let n = self.tick_samples as f64;
        Some(((first / n).floor() as u64, ((end - 1.0) / n).floor() as u64))
    }

    pub fn geometry(&self) -> Result<SensorGeometry, HarnessError> {
        let g = &self.env.geometry;
        SensorGeometry::linear(g.count, g.pitch, g.origin).map_err(invalid("sensor geometry"))
    }

    pub fn sensor_state(&self, geometry: Arc<SensorGeometry>) -> Result<SensorState, HarnessError> {
        let s = &self.sensing;
        let mut kinds = vec![ReceptorKind::Amplitude; geometry.count()];
        for &i in &s.transient_sensors {
            *kinds.get_mut(i).ok_or_else(|| {
                HarnessError::Validation(format!(
                    "transient sensor index {i} outside the {}-sensor array",
                    geometry.count()
                ))
            })? = ReceptorKind::Transient;
        }
        SensorState::new(
            geometry,
            kinds,
            SchemeAssignment {
                amplitude: s.amplitude_scheme,
                transient: s.transient_scheme,
            },
            s.wavelet,
            s.transient_threshold,
            s.envelope_window,
            self.tick_samples,
        )
        .map_err(invalid("sensing"))
    }

    pub fn map_layers(&self) -> Result<[MapLayer; 3], HarnessError> {
        let [cms, cls, ls] = self.maps.map_configs();
        let n = self.env.geometry.count;
        let layer = |c: MapConfig| {
            MapLayer::new(c, n, self.sample_rate, self.tick_samples).map_err(invalid("coverage"))
        };
        Ok([layer(cms)?, layer(cls)?, layer(ls)?])
    }

    pub fn pallium(&self) -> Result<(PalliumState, PolicyTable), HarnessError> {
        let p = &self.pallium;
        let rules = RuleTable::new(p.rules.clone()).map_err(invalid("rule table"))?;
        let policy = PolicyTable::new(p.policy.clone());
        policy.check_covers(&rules).map_err(|e| match e {
            crate::pallium::PalliumError::MissingPolicy(c) => HarnessError::MissingPolicy(c),
            other => HarnessError::Validation(other.to_string()),
        })?;
        let state = PalliumState::new(p.initial_context, Arc::new(rules), p.gamma, p.min_dwell)
            .map_err(invalid("pallium"))?;
        Ok((state, policy))
    }

    /// Checks every invariant that can be checked without running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.sample_rate > 0.0) {
            return Err(HarnessError::Validation("sample_rate must be > 0".into()));
        }
        if !self.tick_samples.is_power_of_two() || self.tick_samples < 2 {
            return Err(HarnessError::Validation(format!(
                "power-of-two window: tick_samples = {} is not a power of two >= 2",
                self.tick_samples
            )));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(HarnessError::Validation(
                "duration must be finite and >= 0".into(),
            ));
        }
        if let Some(snr) = self.env.noise_snr_db {
            if !snr.is_finite() {
                return Err(HarnessError::Validation(
                    "noise_snr_db must be finite".into(),
                ));
            }
        }
        self.env.scene.validate().map_err(invalid("scene"))?;
        let geometry = Arc::new(self.geometry()?);
        let sensing = self.sensor_state(geometry)?;

        let nyquist = self.sample_rate / 2.0;
        validate_map_set(&self.maps.map_configs(), nyquist).map_err(invalid("maps"))?;
        for id in SegmentId::ALL {
            let burst = self.maps.segment(id).burst;
            burst
                .validate()
                .map_err(invalid(&format!("{id} burst coder")))?;
            if self.maps.classification_window < burst.burst_window as usize {
                return Err(HarnessError::Validation(format!(
                    "classification window: {} ticks is shorter than the {id} burst window ({})",
                    self.maps.classification_window, burst.burst_window
                )));
            }
        }
        for band in [self.maps.cls_bands.low, self.maps.cls_bands.high] {
            let probe = MapConfig {
                band,
                ..self.maps.map_configs()[SegmentId::Cls.index()]
            };
            probe.validate(nyquist).map_err(invalid("cls_bands"))?;
        }
        self.map_layers()?;

        let t = &self.tectum;
        if !(t.ridge_lambda >= 0.0) {
            return Err(HarnessError::Validation("ridge_lambda must be >= 0".into()));
        }
        let c = &t.classifier;
        if !(c.chirp_floor > 0.0 && c.object_floor > 0.0 && c.external_floor > 0.0) {
            return Err(HarnessError::Validation(
                "classifier floors must be > 0".into(),
            ));
        }
        let tr = &t.training;
        if !(tr.object_y > tr.object_radius && tr.object_radius > 0.0) {
            return Err(HarnessError::Validation(
                "training object must lie outside its own radius from the array".into(),
            ));
        }
        if tr.noise_snr_db.is_some_and(|snr| !snr.is_finite()) {
            return Err(HarnessError::Validation(
                "training noise_snr_db must be finite".into(),
            ));
        }
        if tr.repeats == 0 || tr.eval_points < 2 || !(tr.eval_step > 0.0) {
            return Err(HarnessError::Validation(
                "training needs repeats >= 1, eval_points >= 2 and eval_step > 0".into(),
            ));
        }

        self.pallium()?;
        for (context, cmd) in &self.pallium.policy {
            apply_tuning(&sensing, cmd).map_err(invalid(&format!("policy for {context}")))?;
            if let Some(band) = cmd.cls_band {
                let bands = self.maps.cls_bands;
                if band != bands.low && band != bands.high {
                    return Err(HarnessError::Validation(format!(
                        "policy for {context}: cls_band {:?} is neither configured CLS band",
                        <[f64; 2]>::from(band)
                    )));
                }
            }
        }
        Ok(())
    }
}

fn invalid<E: std::fmt::Display>(what: &str) -> impl Fn(E) -> HarnessError + '_ {
    move |e| HarnessError::Validation(format!("{what}: {e}"))
}

/// Parses a TOML scenario file. Syntax errors carry 1-based line and column.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, HarnessError> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e
            .span()
            .map(|span| line_column(text, span.start))
            .unwrap_or((0, 0));
        HarnessError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut config = parse_config(&text)?;
    if let (Some(decoder), Some(dir)) = (&config.tectum.decoder, path.parent()) {
        config.tectum.decoder = Some(dir.join(decoder).display().to_string());
    }
    Ok(config)
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.chars().rev().take_while(|&c| c != '\n').count() + 1;
    (line, column)
}
