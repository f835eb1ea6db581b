use std::sync::Arc;

use serde::Serialize;

use crate::env::{render_window, ObjectSpec, Position, Scene, SensorGeometry};
use crate::maps::trifurcate;
use crate::pallium::{counter_ceiling, decay_bound, Context};
use crate::sensing::{report, SensorState};
use crate::tectum::{
    assemble_features, fit_decoder, Decoder, EventKind, FeatureVector, TectumError,
};

use super::noise::{NoiseSource, TRIAL_STREAM_BASE};
use super::{HarnessError, ScenarioConfig, Simulator, StepError};

/// Training set on the sensor grid and a held-out sub-pitch sweep.
#[derive(Debug, Clone)]
pub struct HyperacuityDataset {
    pub train: Vec<(FeatureVector, f64)>,
    pub eval: Vec<(FeatureVector, f64)>,
    pub pitch: f64,
}

/// Smallest pitch-spaced grid, centred on the array, that spans `sweep`.
pub fn training_positions(geometry: &SensorGeometry, sweep: &[f64]) -> Vec<f64> {
    let pitch = geometry.pitch();
    let c = geometry.center_x();
    let half = sweep.iter().map(|x| (x - c).abs()).fold(0.0, f64::max);
    let n = (2.0 * half / pitch - 1e-9).ceil() as usize + 1;
    let mid = (n as f64 - 1.0) / 2.0;
    (0..n).map(|i| c + (i as f64 - mid) * pitch).collect()
}

/// `count` positions centred on the array, `step` pitches apart. With an even
/// count none of them falls on a sensor.
pub fn evaluation_positions(geometry: &SensorGeometry, count: usize, step: f64) -> Vec<f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count)
        .map(|k| geometry.center_x() + (k as f64 - mid) * step * geometry.pitch())
        .collect()
}

/// One fresh trial: a quiet tick, then the object appears. The features are
/// the map response on the second tick.
fn onset_trial(
    config: &ScenarioConfig,
    geometry: &SensorGeometry,
    sensing: &SensorState,
    x: f64,
    stream: u64,
) -> Result<FeatureVector, StepError> {
    let tr = &config.tectum.training;
    let mut scene = Scene::new(config.env.scene.self_source);
    scene.constants = config.env.scene.constants;
    let mut noise = tr
        .noise_snr_db
        .map(|snr| NoiseSource::new(config.seed, TRIAL_STREAM_BASE + stream, snr));
    let mut layers = config
        .map_layers()
        .expect("map layers were validated with the config");
    let tick_len = config.tick_duration();
    let y = geometry.positions()[0].y + tr.object_y;

    let mut last = None;
    for tick in 0..2u64 {
        if tick == 1 {
            scene.objects.push(ObjectSpec {
                position: Position::new(x, y),
                radius: tr.object_radius,
                contrast: tr.object_contrast,
            });
        }
        let start = tick as f64 * tick_len;
        let mut frames = render_window(
            &scene,
            geometry,
            start,
            config.sample_rate,
            config.tick_samples,
        )?;
        if let Some(noise) = &mut noise {
            noise.corrupt(&mut frames);
        }
        let drives = trifurcate(&report(sensing, &frames)?);
        let mut acts = Vec::with_capacity(3);
        for (layer, d) in layers.iter_mut().zip(&drives) {
            acts.push(layer.respond_drive(d, start)?);
        }
        last = Some(acts);
    }
    let acts = last.expect("two ticks");
    Ok(assemble_features(&acts[0], &acts[1], &acts[2], [0.0; 3])?)
}

/// Renders the training grid (`repeats` noisy trials per grid position)
/// and the evaluation sweep. Trial `k` draws noise from stream
/// `TRIAL_STREAM_BASE + k`, training trials first.
pub fn hyperacuity_dataset(config: &ScenarioConfig) -> Result<HyperacuityDataset, HarnessError> {
    config.validate()?;
    let geometry = Arc::new(config.geometry()?);
    let sensing = config.sensor_state(geometry.clone())?;
    let tr = &config.tectum.training;
    let mut stream = 0u64;
    let mut trial = |x: f64| {
        let f = onset_trial(config, &geometry, &sensing, x, stream).map_err(HarnessError::Step);
        stream += 1;
        f.map(|f| (f, x))
    };
    let sweep = evaluation_positions(&geometry, tr.eval_points, tr.eval_step);
    let mut train = Vec::new();
    for x in training_positions(&geometry, &sweep) {
        for _ in 0..tr.repeats {
            train.push(trial(x)?);
        }
    }
    let eval = sweep
        .into_iter()
        .map(&mut trial)
        .collect::<Result<_, _>>()?;
    Ok(HyperacuityDataset {
        train,
        eval,
        pitch: geometry.pitch(),
    })
}

fn rmse(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for (a, b) in pairs {
        sum += (a - b).powi(2);
        n += 1;
    }
    (sum / n.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, Serialize)]
pub struct HyperacuityReport {
    /// Meters.
    pub rmse: f64,
    pub rmse_pitch_fraction: f64,
    pub training_residual: f64,
    /// Adjacent sweep positions whose estimates do not increase.
    pub monotonicity_violations: usize,
    pub eval_points: usize,
    pub training_samples: usize,
    /// `(true, decoded)` per sweep position.
    #[serde(skip)]
    pub estimates: Vec<(f64, f64)>,
    #[serde(skip)]
    pub decoder: Decoder,
}

/// Decodes the sweep with `decoder`, or with one fitted on the training grid.
pub fn experiment_hyperacuity(
    config: &ScenarioConfig,
    data: &HyperacuityDataset,
    decoder: Option<&Decoder>,
) -> Result<HyperacuityReport, HarnessError> {
    let decoder = match decoder {
        Some(d) => d.clone(),
        None => fit_decoder(&data.train, config.tectum.ridge_lambda).map_err(step)?,
    };
    let estimates = data
        .eval
        .iter()
        .map(|(f, x)| decoder.decode(f).map(|(p, _)| (*x, p)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(step)?;
    let rmse = rmse(estimates.iter().copied());
    let monotonicity_violations = estimates.windows(2).filter(|w| w[1].1 <= w[0].1).count();
    Ok(HyperacuityReport {
        rmse,
        rmse_pitch_fraction: rmse / data.pitch,
        training_residual: decoder.training_residual(),
        monotonicity_violations,
        eval_points: estimates.len(),
        training_samples: data.train.len(),
        estimates,
        decoder,
    })
}

fn step(e: TectumError) -> HarnessError {
    HarnessError::Step(e.into())
}

#[derive(Debug, Clone, Serialize)]
pub struct LesionReport {
    pub baseline_rmse: f64,
    /// Largest `max_x |x̂ − x̂_lesioned|` over features, divided by the baseline RMSE.
    pub max_change_ratio: f64,
    /// Largest RMS change over the sweep, divided by the baseline RMSE.
    pub max_rms_change_ratio: f64,
    pub worst_feature: usize,
    pub best_single_rmse: f64,
    pub best_single_feature: usize,
    /// Per feature: max absolute change, RMS change, single-feature decoder RMSE.
    #[serde(skip)]
    pub per_feature: Vec<[f64; 3]>,
}

/// Zeroes each feature in turn and re-decodes the sweep; also fits one
/// decoder per single feature on the training grid.
pub fn experiment_lesion(
    config: &ScenarioConfig,
    data: &HyperacuityDataset,
    decoder: &Decoder,
) -> Result<LesionReport, HarnessError> {
    if !decoder.is_trained() {
        return Err(step(TectumError::Untrained));
    }
    let baseline: Vec<f64> = data
        .eval
        .iter()
        .map(|(f, _)| decoder.decode(f).map(|r| r.0))
        .collect::<Result<_, _>>()
        .map_err(step)?;
    let baseline_rmse = rmse(baseline.iter().copied().zip(data.eval.iter().map(|e| e.1)));
    let dim = decoder.feature_len();
    let mut per_feature = Vec::with_capacity(dim);
    for j in 0..dim {
        let mut max_abs: f64 = 0.0;
        let mut sq = 0.0;
        for ((f, _), b) in data.eval.iter().zip(&baseline) {
            let (p, _) = decoder.decode(&f.lesioned(j)).map_err(step)?;
            let d = (p - b).abs();
            max_abs = max_abs.max(d);
            sq += d * d;
        }
        let rms = (sq / baseline.len() as f64).sqrt();
        let single = single_feature_rmse(data, j, config.tectum.ridge_lambda)?;
        per_feature.push([max_abs, rms, single]);
    }
    let argmax = |col: usize| {
        (0..dim)
            .max_by(|&a, &b| per_feature[a][col].total_cmp(&per_feature[b][col]))
            .unwrap_or(0)
    };
    let worst_feature = argmax(0);
    let worst_rms = argmax(1);
    let best_single_feature = (0..dim)
        .min_by(|&a, &b| per_feature[a][2].total_cmp(&per_feature[b][2]))
        .unwrap_or(0);
    Ok(LesionReport {
        baseline_rmse,
        max_change_ratio: per_feature.get(worst_feature).map_or(0.0, |r| r[0]) / baseline_rmse,
        max_rms_change_ratio: per_feature.get(worst_rms).map_or(0.0, |r| r[1]) / baseline_rmse,
        worst_feature,
        best_single_rmse: per_feature
            .get(best_single_feature)
            .map_or(f64::INFINITY, |r| r[2]),
        best_single_feature,
        per_feature,
    })
}

/// Sweep RMSE of a decoder that sees only feature `j`. A feature that never
/// varies over the training set decodes to the training mean.
fn single_feature_rmse(
    data: &HyperacuityDataset,
    j: usize,
    lambda: f64,
) -> Result<f64, HarnessError> {
    let project = |set: &[(FeatureVector, f64)]| -> Vec<(FeatureVector, f64)> {
        set.iter()
            .map(|(f, x)| (FeatureVector(vec![f.as_slice()[j]]), *x))
            .collect()
    };
    let train = project(&data.train);
    let eval = project(&data.eval);
    match fit_decoder(&train, lambda) {
        Ok(d) => {
            let mut pairs = Vec::with_capacity(eval.len());
            for (f, x) in &eval {
                pairs.push((d.decode(f).map_err(step)?.0, *x));
            }
            Ok(rmse(pairs.into_iter()))
        }
        Err(TectumError::SingularSystem) => {
            let mean = train.iter().map(|t| t.1).sum::<f64>() / train.len() as f64;
            Ok(rmse(eval.iter().map(|(_, x)| (mean, *x))))
        }
        Err(e) => Err(step(e)),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedbackReport {
    /// First tick holding a sample of the first chirp.
    pub onset_tick: Option<u64>,
    /// Last tick holding a sample of that chirp.
    pub chirp_end_tick: Option<u64>,
    /// First tick at or after onset that ends in the communication context.
    pub switch_tick: Option<u64>,
    /// First tick processed with the CLS high band in force.
    pub band_applied_tick: Option<u64>,
    /// First tick processed with the communication wavelet family in force.
    pub wavelet_applied_tick: Option<u64>,
    /// First tick after the switch that ends outside the communication context.
    pub reversion_tick: Option<u64>,
    pub switch_latency: Option<u64>,
    pub reversion_latency: Option<u64>,
    /// Quiet ticks needed for a saturated chirp counter to fall below the
    /// threshold that holds the communication context.
    pub decay_bound: u64,
    pub min_dwell: u64,
    pub ticks: u64,
}

impl FeedbackReport {
    pub fn describe(&self) -> String {
        match self.switch_latency {
            Some(l) => format!("switch after {l} ticks"),
            None => "no switch".to_string(),
        }
    }
}

/// Runs the scenario and times the response to its first scripted chirp.
pub fn experiment_feedback(config: &ScenarioConfig) -> Result<FeedbackReport, HarnessError> {
    let first_chirp = config
        .env
        .scene
        .conspecifics
        .iter()
        .flat_map(|c| &c.chirps)
        .min_by(|a, b| a.onset.total_cmp(&b.onset))
        .copied();
    let span = first_chirp.and_then(|c| config.ticks_between(c.onset, c.end()));
    let onset_tick = span.map(|s| s.0);
    let chirp_end_tick = span.map(|s| s.1);
    let comm_policy = config.pallium.policy.get(&Context::Communication);
    let high = config.maps.cls_bands.high;
    let comm_family = comm_policy
        .and_then(|p| p.wavelet_family.as_deref())
        .and_then(|n| n.parse::<crate::sensing::WaveletFamily>().ok());
    let hold_threshold = config
        .pallium
        .rules
        .iter()
        .find(|r| r.context == Context::Communication && r.event == EventKind::ConspecificChirp)
        .map_or(f64::INFINITY, |r| r.threshold);
    let gamma = config.pallium.gamma;

    let mut report = FeedbackReport {
        onset_tick,
        chirp_end_tick,
        switch_tick: None,
        band_applied_tick: None,
        wavelet_applied_tick: None,
        reversion_tick: None,
        switch_latency: None,
        reversion_latency: None,
        decay_bound: decay_bound(gamma, hold_threshold, counter_ceiling(gamma)),
        min_dwell: config.pallium.min_dwell,
        ticks: config.tick_count(),
    };
    let Some(onset) = onset_tick else {
        return Ok(report);
    };

    let mut sim = Simulator::new(config, None)?;
    for _ in 0..config.tick_count() {
        let out = sim.step()?;
        let tick = out.row.tick;
        if tick < onset {
            continue;
        }
        match report.switch_tick {
            None if out.row.context == Context::Communication => report.switch_tick = Some(tick),
            Some(s)
                if tick > s
                    && report.reversion_tick.is_none()
                    && out.row.context != Context::Communication =>
            {
                report.reversion_tick = Some(tick)
            }
            _ => {}
        }
        if report.band_applied_tick.is_none() && out.cls_band == high {
            report.band_applied_tick = Some(tick);
        }
        if report.wavelet_applied_tick.is_none()
            && report.switch_tick.is_some_and(|s| tick > s)
            && Some(out.wavelet_family) == comm_family
        {
            report.wavelet_applied_tick = Some(tick);
        }
    }
    report.switch_latency = report.switch_tick.map(|s| s - onset);
    report.reversion_latency = match (report.reversion_tick, chirp_end_tick) {
        (Some(r), Some(e)) => Some(r.saturating_sub(e)),
        _ => None,
    };
    Ok(report)
}
