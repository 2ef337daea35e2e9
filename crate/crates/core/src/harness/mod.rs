//! Experiment plumbing: configuration, adapter training with early stopping,
//! metrics, the end-to-end pipeline, channel-independent multivariate runs,
//! ablation sweeps and the command-line interface.

mod ablation;
pub mod cli;
mod config;
mod metrics;
mod pipeline;
mod train;

pub use ablation::{quantile, run_ablation, spread, AblationCell, AblationRow, AblationTable, Spread};
pub use config::{
    AdapterConfig, DataSource, EvalConfig, ExperimentConfig, GrangerConfig, TrainConfig, WindowConfig, CONFIG_VERSION,
};
pub use metrics::{crps_from_samples, evaluate, metric_set, HorizonMetric, MetricSet};
pub use pipeline::{
    adapt_and_evaluate, adapter_dims, build_providers, embed_sets, load_dataset, prepare, prepare_windows, pretrain,
    run_multivariate, run_pipeline, ChannelResult, Dataset, Embedded, MultivariateResult, Prepared, RunOutput,
    RunSummary,
};
pub use train::{
    record_batch_loss, set_mse, train_adapter, train_step, EarlyStopping, EpochLog, LrRun, TrainingLog,
};

use thiserror::Error;

use crate::adapter::AdapterError;
use crate::backbone::BackboneError;
use crate::datagen::DataError;
use crate::granger::GrangerError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Granger(#[from] GrangerError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl HarnessError {
    /// 1 for problems with the configuration or its inputs, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::MissingArtifact(_) => 1,
            HarnessError::Data(e) => match e {
                DataError::Generation(_) | DataError::Shape(_) => 2,
                _ => 1,
            },
            HarnessError::Adapter(AdapterError::Config(_)) | HarnessError::Backbone(BackboneError::Config(_)) => 1,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}
