use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use serde::Serialize;

use crate::env::{render_window, step_scene, Position, Scene, SensorGeometry};
use crate::maps::{
    burst_encode, trifurcate, Band, BurstCoderParams, MapActivity, MapLayer, SegmentId,
};
use crate::pallium::{
    issue_commands, Context, ContextChange, PalliumState, PolicyTable, TuningCommand,
};
use crate::sensing::{apply_tuning, report, SensorState, WaveletFamily};
use crate::tectum::{
    assemble_features, burst_rates, classify_event, BurstStats, Decoder, EventKind, FeatureVector,
};

use super::noise::{NoiseSource, RUN_STREAM};
use super::{HarnessError, ScenarioConfig, StepError};

/// One row of `run.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub tick: u64,
    /// Start of the tick's window, seconds.
    pub time: f64,
    /// Context after this tick's transition.
    pub context: Context,
    pub decoded_position: Option<f64>,
    /// Body-axis coordinate of the object nearest the array centre.
    pub true_position: Option<f64>,
    pub event_kind: EventKind,
    /// Burst events per map in the classification window.
    pub bursts: [usize; 3],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
}

/// One line of `events.log`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventLogEntry {
    pub tick: u64,
    pub context: Context,
    pub event: EventKind,
    pub counters: BTreeMap<&'static str, f64>,
    pub transition: Option<ContextChange>,
    pub commands: Vec<TuningCommand>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub entries: Vec<EventLogEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub ticks: u64,
    /// Meters, over ticks with both a decoded and a true position.
    pub position_rmse: Option<f64>,
    /// `confusion[truth][predicted]`, indexed in `EventKind::ALL` order.
    pub confusion: [[u64; 4]; 4],
    pub context_switches: u64,
    /// Ticks from the first chirp onset to the first switch into communication.
    pub switch_latency_ticks: Option<u64>,
}

impl MetricsSummary {
    fn empty() -> Self {
        Self {
            ticks: 0,
            position_rmse: None,
            confusion: [[0; 4]; 4],
            context_switches: 0,
            switch_latency_ticks: None,
        }
    }
}

/// Everything observed during one tick.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub row: RunRow,
    pub log: EventLogEntry,
    pub features: FeatureVector,
    pub stats: BurstStats,
    /// Stimulus designated by the scene for this tick.
    pub truth: EventKind,
    /// CLS band in force while this tick was processed.
    pub cls_band: Band,
    pub wavelet_family: WaveletFamily,
    pub chirp_active: bool,
    pub activities: [MapActivity; 3],
}

/// Closed-loop pipeline state advanced one tick at a time.
pub struct Simulator {
    config: ScenarioConfig,
    geometry: Arc<SensorGeometry>,
    scene: Scene,
    sensing: SensorState,
    layers: [MapLayer; 3],
    histories: [VecDeque<MapActivity>; 3],
    burst_params: [BurstCoderParams; 3],
    pallium: PalliumState,
    policy: PolicyTable,
    noise: Option<NoiseSource>,
    decoder: Option<Decoder>,
    tick: u64,
}

impl Simulator {
    pub fn new(config: &ScenarioConfig, decoder: Option<Decoder>) -> Result<Self, HarnessError> {
        config.validate()?;
        let geometry = Arc::new(config.geometry()?);
        let sensing = config.sensor_state(geometry.clone())?;
        let layers = config.map_layers()?;
        let (pallium, policy) = config.pallium()?;
        let noise = config
            .env
            .noise_snr_db
            .map(|snr| NoiseSource::new(config.seed, RUN_STREAM, snr));
        Ok(Self {
            scene: config.env.scene.clone(),
            burst_params: config.maps.burst_params(),
            histories: Default::default(),
            config: config.clone(),
            geometry,
            sensing,
            layers,
            pallium,
            policy,
            noise,
            decoder,
            tick: 0,
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn context(&self) -> Context {
        self.pallium.context
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn sensing(&self) -> &SensorState {
        &self.sensing
    }

    pub fn cls_band(&self) -> Band {
        self.layers[SegmentId::Cls.index()].config().band
    }

    pub fn step(&mut self) -> Result<TickOutput, HarnessError> {
        let tick = self.tick;
        self.step_inner()
            .map_err(|source| HarnessError::Tick { tick, source })
    }

    fn step_inner(&mut self) -> Result<TickOutput, StepError> {
        let cfg = &self.config;
        let tick = self.tick;
        let tick_len = cfg.tick_duration();
        let start = tick as f64 * tick_len;

        let mut frames = render_window(
            &self.scene,
            &self.geometry,
            start,
            cfg.sample_rate,
            cfg.tick_samples,
        )?;
        if let Some(noise) = &mut self.noise {
            noise.corrupt(&mut frames);
        }
        let rep = report(&self.sensing, &frames)?;
        let drives = trifurcate(&rep);
        let cls_band = self.cls_band();
        let wavelet_family = self.sensing.wavelet().family;

        let mut activities = Vec::with_capacity(3);
        for (layer, drive) in self.layers.iter_mut().zip(&drives) {
            activities.push(layer.respond_drive(drive, start)?);
        }
        let activities: [MapActivity; 3] = activities.try_into().expect("three maps");

        let window = cfg.maps.classification_window;
        let mut counts = [0usize; 3];
        for i in 0..3 {
            let history = &mut self.histories[i];
            history.push_back(activities[i].clone());
            while history.len() > window {
                history.pop_front();
            }
            counts[i] = burst_encode(history.make_contiguous(), &self.burst_params[i]).len();
        }
        let rates = burst_rates(counts, cfg.maps.neuron_counts());
        let features = assemble_features(&activities[0], &activities[1], &activities[2], rates)?;
        let stats = BurstStats {
            rates,
            cls_high_band: cls_band == cfg.maps.cls_bands.high,
            self_eod_on: self.scene.self_eod_on,
        };
        let kind = classify_event(&stats, &cfg.tectum.classifier);
        let decoded_position = match (&self.decoder, kind) {
            (Some(d), EventKind::ObjectEcho) => Some(d.decode(&features)?.0),
            _ => None,
        };

        let chirp_active = self
            .scene
            .conspecifics
            .iter()
            .flat_map(|c| &c.chirps)
            .filter_map(|c| cfg.ticks_between(c.onset, c.end()))
            .any(|(first, last)| (first..=last).contains(&tick));
        let truth = designated_stimulus(&self.scene, chirp_active);
        let true_position = nearest_object(&self.scene, &self.geometry);

        let observed = self.pallium.observe(&[kind]);
        let (next, change) = observed.transition();
        let commands = match change {
            Some(c) => issue_commands(c.from, c.to, &self.policy)?,
            None => Vec::new(),
        };
        for cmd in &commands {
            self.apply(cmd)?;
        }
        let counters = next.counters.iter().map(|(k, v)| (k.name(), v)).collect();
        self.pallium = next;

        let row = RunRow {
            tick,
            time: start,
            context: self.pallium.context,
            decoded_position,
            true_position,
            event_kind: kind,
            bursts: counts,
        };
        let log = EventLogEntry {
            tick,
            context: self.pallium.context,
            event: kind,
            counters,
            transition: change,
            commands,
        };

        self.scene = step_scene(&self.scene, tick_len);
        self.tick += 1;
        Ok(TickOutput {
            row,
            log,
            features,
            stats,
            truth,
            cls_band,
            wavelet_family,
            chirp_active,
            activities,
        })
    }

    /// Applies a command; it takes effect from the next tick.
    fn apply(&mut self, cmd: &TuningCommand) -> Result<(), StepError> {
        self.sensing = apply_tuning(&self.sensing, cmd)?;
        if let Some(band) = cmd.cls_band {
            self.layers[SegmentId::Cls.index()].retune(band)?;
        }
        if let Some(on) = cmd.self_eod_on {
            self.scene.self_eod_on = on;
        }
        Ok(())
    }
}

fn designated_stimulus(scene: &Scene, chirp_active: bool) -> EventKind {
    let moving = scene
        .object_velocities
        .iter()
        .take(scene.objects.len())
        .any(|v| v.x != 0.0 || v.y != 0.0);
    if chirp_active {
        EventKind::ConspecificChirp
    } else if moving && scene.self_eod_on {
        EventKind::ObjectEcho
    } else if !scene.passive_sources.is_empty() {
        EventKind::ExternalLowFreqField
    } else {
        EventKind::Quiet
    }
}

fn nearest_object(scene: &Scene, geometry: &SensorGeometry) -> Option<f64> {
    let first = geometry.positions()[0];
    let center = Position::new(geometry.center_x(), first.y);
    scene
        .objects
        .iter()
        .min_by(|a, b| {
            a.position
                .distance(&center)
                .total_cmp(&b.position.distance(&center))
        })
        .map(|o| o.position.x)
}

/// Reads a decoder file written by [`Decoder::write_to`].
pub fn load_decoder(path: impl AsRef<std::path::Path>) -> Result<Decoder, HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Decoder::read_from(std::io::BufReader::new(file)).map_err(|e| HarnessError::Step(e.into()))
}

/// Runs the closed loop for the configured duration. The decoder named in the
/// config, if any, fills the decoded-position column.
pub fn run_scenario(
    config: &ScenarioConfig,
) -> Result<(RunRecord, MetricsSummary, EventLog), HarnessError> {
    let decoder = match &config.tectum.decoder {
        Some(path) => Some(load_decoder(path)?),
        None => None,
    };
    let mut sim = Simulator::new(config, decoder)?;
    let mut record = RunRecord::default();
    let mut log = EventLog::default();
    let mut summary = MetricsSummary::empty();
    let mut sq_err = 0.0;
    let mut decoded = 0usize;
    let mut onset: Option<u64> = None;
    for _ in 0..config.tick_count() {
        let out = sim.step()?;
        summary.confusion[out.truth.index()][out.row.event_kind.index()] += 1;
        if let (Some(d), Some(t)) = (out.row.decoded_position, out.row.true_position) {
            sq_err += (d - t).powi(2);
            decoded += 1;
        }
        if out.chirp_active && onset.is_none() {
            onset = Some(out.row.tick);
        }
        if let Some(change) = out.log.transition {
            summary.context_switches += 1;
            if let (Some(o), None, Context::Communication) =
                (onset, summary.switch_latency_ticks, change.to)
            {
                summary.switch_latency_ticks = Some(out.row.tick - o);
            }
        }
        record.rows.push(out.row);
        log.entries.push(out.log);
    }
    summary.ticks = record.rows.len() as u64;
    if decoded > 0 {
        summary.position_rmse = Some((sq_err / decoded as f64).sqrt());
    }
    Ok((record, summary, log))
}
