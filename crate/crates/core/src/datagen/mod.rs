//! Synthetic datasets with planted causal structure, CSV ingestion and
//! emission, windowing and instance normalization.

mod csv_io;
mod frame;
mod generate;
mod window;

pub use csv_io::{load_csv, load_schema, write_csv, write_schema};
pub use frame::{Channel, ChannelSpec, Modality, Role, Schema, SeriesFrame};
pub use generate::{
    generate_var_dataset, is_stable, CovariateTruth, DriverConfig, GeneratorConfig, GroundTruthCausality,
};
pub use window::{
    denormalize_window, few_shot, make_windows, normalize_window, window_count, CovariateSlice, ForecastWindow,
    NormRecord, SplitFractions, WindowSets, STD_FLOOR,
};

use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("generation error: {0}")]
    Generation(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io { path: path.display().to_string(), source }
    }
}
