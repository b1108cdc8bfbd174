//! Config-driven experiment runs: prepare, rebalance, fit, evaluate, sweep
//! and compare against an external scorer, writing reports and a manifest.

mod config;
mod manifest;
mod pipeline;

pub use config::{
    DataPaths, ExperimentConfig, FeatureConfig, LabelingConfig, ModelConfig, RebalanceConfig, RebalanceMode,
    SplitConfig, SweepConfig,
};
pub use manifest::{sha256_hex, OutputStage, RunManifest, StageTiming};
pub use pipeline::{
    compare_scores, evaluate_saved_model, prepare, read_external_scores, render_reports, run_compare_external,
    run_experiment, run_sweep, split_overlap, synthesize_fill, test_fingerprint, DisagreementExample,
    ExternalComparison, FeatureState, Prepared, RunOutcome, RunReport, SweepOutcome, SweepPosition, SweepRow,
    TrainingSet, Workspace, REPORT_FORMAT_VERSION,
};

use thiserror::Error;

use crate::models::ModelError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage}: {message}")]
    Data { stage: &'static str, message: String },
    #[error("{stage}: {message}")]
    Divergence { stage: &'static str, message: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error("{failed} of {total} sweep points failed")]
    PartialSweep { failed: usize, total: usize },
}

impl ExperimentError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Data { .. } | ExperimentError::Io(_) => 3,
            ExperimentError::Divergence { .. } => 4,
            ExperimentError::PartialSweep { .. } => 5,
        }
    }

    pub(crate) fn data(stage: &'static str, e: impl std::fmt::Display) -> Self {
        ExperimentError::Data { stage, message: e.to_string() }
    }

    pub(crate) fn model(stage: &'static str, e: ModelError) -> Self {
        match e {
            ModelError::Divergence { .. } => ExperimentError::Divergence { stage, message: e.to_string() },
            ModelError::Config(_) | ModelError::UnknownFamily(_) => ExperimentError::Config(e.to_string()),
            other => ExperimentError::data(stage, other),
        }
    }
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}
