//! Simulated electrosensory world, active wavelet sensor array, three parallel
//! sensory maps, a linear readout and a symbolic context controller.

// `!(x > 0.0)` style checks are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod harness;
pub mod maps;
pub mod pallium;
pub mod sensing;
pub mod tectum;

pub use env::{ObjectSpec, Position, Scene, SensorFrame, SensorGeometry};
pub use maps::{
    Band, BurstCoderParams, BurstEvent, MapActivity, MapConfig, MapLayer, SegmentId, SensorDrive,
};
pub use pallium::{Context, PalliumState, PolicyTable, Rule, RuleTable, TuningCommand};
pub use sensing::{
    CodingScheme, ReceptorKind, SensorReport, SensorState, WaveletFamily, WaveletSpec,
};
pub use tectum::{Decoder, Estimate, EventKind, FeatureVector};
