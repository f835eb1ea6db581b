//! Scenario configuration, the closed-loop run, experiment suites and output
//! files.

mod config;
mod experiments;
pub mod noise;
mod output;
mod run;

use thiserror::Error;

use crate::env::EnvError;
use crate::maps::MapsError;
use crate::pallium::{Context, PalliumError};
use crate::sensing::SensingError;
use crate::tectum::TectumError;

pub use config::{
    load_config, parse_config, EnvConfig, GeometryConfig, MapsConfig, PalliumConfig,
    ScenarioConfig, SegmentConfig, SensingConfig, TectumConfig, TrainingConfig,
};
pub use experiments::{
    evaluation_positions, experiment_feedback, experiment_hyperacuity, experiment_lesion,
    hyperacuity_dataset, training_positions, FeedbackReport, HyperacuityDataset, HyperacuityReport,
    LesionReport,
};
pub use output::{write_event_log, write_outputs, write_run_csv, write_summary, RUN_CSV_HEADER};
pub use run::{
    load_decoder, run_scenario, EventLog, EventLogEntry, MetricsSummary, RunRecord, RunRow,
    Simulator, TickOutput,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("invalid config: no policy entry for reachable context {0}")]
    MissingPolicy(Context),
    #[error("tick {tick}: {source}")]
    Tick {
        tick: u64,
        #[source]
        source: StepError,
    },
    #[error(transparent)]
    Step(#[from] StepError),
}

impl HarnessError {
    /// True for errors caused by the configuration rather than by running it.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            HarnessError::Parse { .. }
                | HarnessError::Validation(_)
                | HarnessError::MissingPolicy(_)
        )
    }
}

/// Error raised by one of the processing stages.
#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Maps(#[from] MapsError),
    #[error(transparent)]
    Tectum(#[from] TectumError),
    #[error(transparent)]
    Pallium(#[from] PalliumError),
}
