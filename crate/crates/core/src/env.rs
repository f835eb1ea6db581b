//! Forward model of the electrosensory world.
//!
//! The fish's own discharge (EOD) is a carrier that is present at every sensor.
//! Nearby objects distort it locally with a small-sphere dipole law, while
//! conspecifics and passive low-frequency emitters add their own fields, which
//! fall off with the square of distance. Every contribution superposes
//! linearly, so a frame is a plain sum over sources.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("degenerate geometry: distance {distance} m does not exceed radius {radius} m")]
    DegenerateGeometry { distance: f64, radius: f64 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid sensor geometry: {0}")]
    InvalidGeometry(String),
}

/// Two-dimensional body-frame coordinate in meters. `x` runs along the body axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    fn offset(&self, dx: f64, dy: f64) -> Position {
        Position::new(self.x + dx, self.y + dy)
    }
}

impl From<[f64; 2]> for Position {
    fn from(v: [f64; 2]) -> Self {
        Position::new(v[0], v[1])
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    SineWave,
    BiphasicPulse,
}

/// Fraction of the period covered by each lobe of a biphasic pulse.
pub const PULSE_LOBE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EodSource {
    pub frequency: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
    pub kind: WaveformKind,
}

impl EodSource {
    /// Builds a source with its phase wrapped into `[0, 2π)`.
    pub fn new(
        kind: WaveformKind,
        frequency: f64,
        amplitude: f64,
        phase: f64,
    ) -> Result<Self, EnvError> {
        let source = Self {
            frequency,
            amplitude,
            phase: phase.rem_euclid(TAU),
            kind,
        };
        source.validate()?;
        Ok(source)
    }

    pub fn sine(frequency: f64, amplitude: f64) -> Self {
        Self {
            frequency,
            amplitude,
            phase: 0.0,
            kind: WaveformKind::SineWave,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(EnvError::InvalidScene(format!(
                "EOD amplitude must be finite and >= 0, got {}",
                self.amplitude
            )));
        }
        if self.amplitude > 0.0 && !(self.frequency.is_finite() && self.frequency > 0.0) {
            return Err(EnvError::InvalidScene(format!(
                "EOD frequency must be > 0 when amplitude > 0, got {}",
                self.frequency
            )));
        }
        if !self.phase.is_finite() {
            return Err(EnvError::InvalidScene("EOD phase must be finite".into()));
        }
        Ok(())
    }

    /// Waveform value at a phase expressed in cycles.
    fn at_cycles(&self, cycles: f64) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        match self.kind {
            WaveformKind::SineWave => self.amplitude * (TAU * cycles).sin(),
            WaveformKind::BiphasicPulse => {
                let frac = cycles.rem_euclid(1.0);
                if frac < PULSE_LOBE_FRACTION {
                    self.amplitude
                } else if frac < 2.0 * PULSE_LOBE_FRACTION {
                    -self.amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// Instantaneous discharge of `source` at time `t` (seconds).
pub fn eod_waveform(source: &EodSource, t: f64) -> f64 {
    source.at_cycles(source.frequency * t + source.phase / TAU)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub position: Position,
    pub radius: f64,
    pub contrast: f64,
}

/// Field distortion seen at `sensor_pos` due to `object`:
/// `contrast · radius³ · emitter · gain / d⁴`.
pub fn object_perturbation(
    object: &ObjectSpec,
    sensor_pos: &Position,
    emitter_amplitude_at_object: f64,
    gain: f64,
) -> Result<f64, EnvError> {
    let d = object.position.distance(sensor_pos);
    if d <= object.radius {
        return Err(EnvError::DegenerateGeometry {
            distance: d,
            radius: object.radius,
        });
    }
    let d2 = d * d;
    Ok(object.contrast * object.radius.powi(3) * emitter_amplitude_at_object * gain / (d2 * d2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chirp {
    pub onset: f64,
    pub duration: f64,
    pub frequency_excursion: f64,
}

impl Chirp {
    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.onset && t < self.end()
    }

    /// Seconds of this chirp elapsed by time `t`.
    fn elapsed(&self, t: f64) -> f64 {
        (t.min(self.end()) - self.onset).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConspecificSpec {
    pub position: Position,
    pub source: EodSource,
    #[serde(default)]
    pub chirps: Vec<Chirp>,
}

impl ConspecificSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        self.source.validate()?;
        let mut previous_end = f64::NEG_INFINITY;
        for chirp in &self.chirps {
            if !(chirp.duration > 0.0) || !chirp.onset.is_finite() {
                return Err(EnvError::InvalidScene(format!(
                    "chirp at {} s must have a finite onset and duration > 0",
                    chirp.onset
                )));
            }
            if chirp.onset < previous_end {
                return Err(EnvError::InvalidScene(
                    "chirps must be sorted by onset and non-overlapping".into(),
                ));
            }
            previous_end = chirp.end();
        }
        Ok(())
    }

    pub fn chirping_at(&self, t: f64) -> bool {
        self.chirps.iter().any(|c| c.contains(t))
    }

    pub fn instantaneous_frequency(&self, t: f64) -> f64 {
        self.chirps
            .iter()
            .find(|c| c.contains(t))
            .map_or(self.source.frequency, |c| {
                self.source.frequency + c.frequency_excursion
            })
    }

    /// Emitted waveform with chirps applied. Phase is continuous across chirp
    /// boundaries: each elapsed chirp contributes `excursion · elapsed` cycles.
    pub fn emitted(&self, t: f64) -> f64 {
        let extra: f64 = self
            .chirps
            .iter()
            .map(|c| c.frequency_excursion * c.elapsed(t))
            .sum();
        self.source
            .at_cycles(self.source.frequency * t + extra + self.source.phase / TAU)
    }

    /// Chirp-free carrier, used as an illumination source for objects.
    pub fn carrier(&self, t: f64) -> f64 {
        eod_waveform(&self.source, t)
    }
}

/// Low-frequency emitter standing in for the bioelectric fields of other
/// animals (passive electrolocation targets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassiveSource {
    pub position: Position,
    pub frequency: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Passive emitters are restricted to frequencies below this bound (Hz).
pub const PASSIVE_MAX_FREQUENCY: f64 = 50.0;

impl PassiveSource {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.frequency > 0.0 && self.frequency < PASSIVE_MAX_FREQUENCY) {
            return Err(EnvError::InvalidScene(format!(
                "passive source frequency must lie in (0, {PASSIVE_MAX_FREQUENCY}) Hz, got {}",
                self.frequency
            )));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(EnvError::InvalidScene(
                "passive source amplitude must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }

    pub fn emitted(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }
}

/// Physical constants of the forward model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FieldConstants {
    /// Scale of the object dipole law.
    pub perturbation_gain: f64,
    /// Far-field gain for external emitters, in V·m² per unit amplitude.
    pub field_gain: f64,
}

impl Default for FieldConstants {
    fn default() -> Self {
        Self {
            perturbation_gain: 1.0,
            field_gain: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub self_source: EodSource,
    #[serde(default = "default_true")]
    pub self_eod_on: bool,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub object_velocities: Vec<Position>,
    #[serde(default)]
    pub conspecifics: Vec<ConspecificSpec>,
    #[serde(default)]
    pub passive_sources: Vec<PassiveSource>,
    #[serde(default)]
    pub constants: FieldConstants,
}

fn default_true() -> bool {
    true
}

impl Scene {
    pub fn new(self_source: EodSource) -> Self {
        Self {
            self_source,
            self_eod_on: true,
            objects: Vec::new(),
            object_velocities: Vec::new(),
            conspecifics: Vec::new(),
            passive_sources: Vec::new(),
            constants: FieldConstants::default(),
        }
    }

    pub fn with_object(mut self, object: ObjectSpec, velocity: Position) -> Self {
        self.objects.push(object);
        self.object_velocities.push(velocity);
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.self_source.validate()?;
        if self.objects.len() != self.object_velocities.len() {
            return Err(EnvError::InvalidScene(format!(
                "{} objects but {} velocities",
                self.objects.len(),
                self.object_velocities.len()
            )));
        }
        for object in &self.objects {
            if !(object.radius > 0.0) {
                return Err(EnvError::InvalidScene("object radius must be > 0".into()));
            }
            if !(object.contrast.abs() <= 1.0) {
                return Err(EnvError::InvalidScene(
                    "object contrast must lie in [-1, 1]".into(),
                ));
            }
        }
        for c in &self.conspecifics {
            c.validate()?;
        }
        for p in &self.passive_sources {
            p.validate()?;
        }
        Ok(())
    }

    fn self_emission(&self, t: f64) -> f64 {
        if self.self_eod_on {
            eod_waveform(&self.self_source, t)
        } else {
            0.0
        }
    }

    fn far_field(&self, amplitude: f64, from: &Position, to: &Position) -> Result<f64, EnvError> {
        let d = from.distance(to);
        if d <= 0.0 {
            return Err(EnvError::DegenerateGeometry {
                distance: d,
                radius: 0.0,
            });
        }
        Ok(amplitude * self.constants.field_gain / (d * d))
    }

    /// True when any conspecific is inside one of its chirp windows at `t`.
    pub fn chirp_active(&self, t: f64) -> bool {
        self.conspecifics.iter().any(|c| c.chirping_at(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    positions: Vec<Position>,
    pitch: f64,
}

impl SensorGeometry {
    /// Evenly spaced array along the body axis starting at `origin`.
    pub fn linear(count: usize, pitch: f64, origin: Position) -> Result<Self, EnvError> {
        let positions = (0..count)
            .map(|i| origin.offset(i as f64 * pitch, 0.0))
            .collect();
        Self::new(positions, pitch)
    }

    pub fn new(positions: Vec<Position>, pitch: f64) -> Result<Self, EnvError> {
        if positions.len() < 2 {
            return Err(EnvError::InvalidGeometry(
                "at least two sensors are required".into(),
            ));
        }
        if !(pitch > 0.0) {
            return Err(EnvError::InvalidGeometry("pitch must be > 0".into()));
        }
        for pair in positions.windows(2) {
            if pair[1].x <= pair[0].x {
                return Err(EnvError::InvalidGeometry(
                    "sensor positions must be strictly ordered along the body axis".into(),
                ));
            }
            if (pair[0].distance(&pair[1]) - pitch).abs() > 1e-12 {
                return Err(EnvError::InvalidGeometry(format!(
                    "adjacent spacing {} differs from pitch {pitch}",
                    pair[0].distance(&pair[1])
                )));
            }
        }
        Ok(Self { positions, pitch })
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// Midpoint of the array along the body axis.
    pub fn center_x(&self) -> f64 {
        0.5 * (self.positions[0].x + self.positions[self.count() - 1].x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub time: f64,
    pub samples: Vec<f64>,
}

/// Samples the superposed field at every sensor at time `t`.
pub fn render_frame(
    scene: &Scene,
    geometry: &SensorGeometry,
    t: f64,
) -> Result<SensorFrame, EnvError> {
    let baseline = scene.self_emission(t);

    // Illumination reaching each object: own discharge plus chirp-free
    // conspecific carriers.
    let mut illumination = Vec::with_capacity(scene.objects.len());
    for object in &scene.objects {
        let mut drive = baseline;
        for c in &scene.conspecifics {
            drive += scene.far_field(c.carrier(t), &c.position, &object.position)?;
        }
        illumination.push(drive);
    }

    let conspecific_emission: Vec<f64> = scene.conspecifics.iter().map(|c| c.emitted(t)).collect();
    let passive_emission: Vec<f64> = scene.passive_sources.iter().map(|p| p.emitted(t)).collect();

    let mut samples = Vec::with_capacity(geometry.count());
    for sensor in geometry.positions() {
        let mut v = baseline;
        for (object, &drive) in scene.objects.iter().zip(&illumination) {
            v += object_perturbation(object, sensor, drive, scene.constants.perturbation_gain)?;
        }
        for (c, &e) in scene.conspecifics.iter().zip(&conspecific_emission) {
            v += scene.far_field(e, &c.position, sensor)?;
        }
        for (p, &e) in scene.passive_sources.iter().zip(&passive_emission) {
            v += scene.far_field(e, &p.position, sensor)?;
        }
        samples.push(v);
    }
    Ok(SensorFrame { time: t, samples })
}

/// Renders `count` consecutive frames starting at `start` with spacing `1 / sample_rate`.
pub fn render_window(
    scene: &Scene,
    geometry: &SensorGeometry,
    start: f64,
    sample_rate: f64,
    count: usize,
) -> Result<Vec<SensorFrame>, EnvError> {
    (0..count)
        .map(|n| render_frame(scene, geometry, start + n as f64 / sample_rate))
        .collect()
}

/// Advances object positions by `velocity · dt`.
pub fn step_scene(scene: &Scene, dt: f64) -> Scene {
    let mut next = scene.clone();
    for (object, v) in next.objects.iter_mut().zip(&scene.object_velocities) {
        object.position = object.position.offset(v.x * dt, v.y * dt);
    }
    next
}
