use serde::{Deserialize, Serialize};

use super::{MapActivity, MapsError, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstCoderParams {
    pub spike_threshold: f64,
    /// Ticks after a spike during which the neuron cannot fire again.
    pub refractory: u32,
    pub burst_min_spikes: u32,
    /// Span, in ticks, that must contain `burst_min_spikes` spikes.
    pub burst_window: u32,
}

impl BurstCoderParams {
    pub fn validate(&self) -> Result<(), MapsError> {
        if !(self.spike_threshold > 0.0) {
            return Err(MapsError::InvalidConfig(
                "burst coder: spike_threshold must be > 0".into(),
            ));
        }
        if self.burst_min_spikes < 2 {
            return Err(MapsError::InvalidConfig(
                "burst coder: burst_min_spikes must be >= 2".into(),
            ));
        }
        if self.burst_window < self.burst_min_spikes {
            return Err(MapsError::InvalidConfig(
                "burst coder: burst_window must be >= burst_min_spikes".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstEvent {
    pub segment: SegmentId,
    pub neuron: usize,
    pub onset: u64,
    pub spike_count: u32,
    pub mean_isi: f64,
}

/// Spike ticks for one activity trace. A neuron fires whenever its activity
/// reaches threshold and it is out of refractory, so stronger drive can only
/// add spikes.
pub fn spike_ticks(
    trace: impl IntoIterator<Item = (u64, f64)>,
    params: &BurstCoderParams,
) -> Vec<u64> {
    let mut spikes = Vec::new();
    let mut last: Option<u64> = None;
    for (tick, a) in trace {
        let ready = last.is_none_or(|l| tick - l > u64::from(params.refractory));
        if ready && a >= params.spike_threshold {
            spikes.push(tick);
            last = Some(tick);
        }
    }
    spikes
}

/// Scans a contiguous activity history and reports non-overlapping bursts per
/// neuron. A history shorter than the burst window yields no events.
pub fn burst_encode(history: &[MapActivity], params: &BurstCoderParams) -> Vec<BurstEvent> {
    let Some(first) = history.first() else {
        return Vec::new();
    };
    if history.len() < params.burst_window as usize {
        return Vec::new();
    }
    let segment = first.segment;
    let neurons = first.activity.len();
    let mut events = Vec::new();
    for neuron in 0..neurons {
        let spikes = spike_ticks(history.iter().map(|h| (h.tick, h.activity[neuron])), params);
        let mut i = 0;
        while i < spikes.len() {
            let end = spikes[i] + u64::from(params.burst_window);
            let j = spikes[i..].partition_point(|&s| s < end) + i;
            let count = (j - i) as u32;
            if count >= params.burst_min_spikes {
                events.push(BurstEvent {
                    segment,
                    neuron,
                    onset: spikes[i],
                    spike_count: count,
                    mean_isi: (spikes[j - 1] - spikes[i]) as f64 / f64::from(count - 1),
                });
                i = j;
            } else {
                i += 1;
            }
        }
    }
    events
}
