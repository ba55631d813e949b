//! End-to-end experiment harness: one pipeline run per grid point,
//! repetition and fold, grid sweeps with result caching, and paired
//! ablations.

mod ablation;
mod config;
mod grid;
mod pipeline;

use thiserror::Error;

pub use ablation::{ablate, pair_records, AblationPair, AblationSummary, PointSummary};
pub use config::{DataSource, ExperimentConfig, GridPoint, Head, RunSeeds, Toggles};
pub use grid::{
    aggregate, heatmap_svg, load_records, run_grid, write_aggregate_csv, write_grid_outputs, write_pivot_csv,
    write_records_csv, write_timing_csv, AggregateRow, GridOptions, GridOutcome, MetricStats, AGGREGATE_METRICS, RECORD_COLUMNS,
};
pub use pipeline::{
    augment, evaluate_split, guard_training_only, load_fddb_bursts, load_pool, materialize, run_key, run_pipeline,
    split_fold, stage, Augmented, FeatureScaler, PipelinePrediction, RunRecord, RunStatus, TrainedPipeline,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("burst {burst} outside the training split reached {stage}")]
    Leakage { stage: &'static str, burst: u64 },
    #[error("ablation: {0}")]
    Unpaired(String),
    #[error("io: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Data(_) => 4,
            _ => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
