//! A small pretrained patch forecaster used frozen, plus stand-in encoders
//! for foreign modalities.

mod bundle;
mod checkpoint;
mod model;
mod pretrain;
mod provider;

pub use bundle::{embed_window, CovariateEmbedding, EmbeddingBundle, ProviderSet};
pub use checkpoint::{BACKBONE_FORMAT, CHECKPOINT_VERSION};
pub use model::{aggregate_embedding, Backbone, BackboneArch, HeadKind, PretrainMeta};
pub use pretrain::{pretrain_backbone, PretrainConfig};
pub use provider::{ForeignProvider, ProviderSpec};

#[allow(unused_imports)]
pub(crate) use model::{hash_params, xavier};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum BackboneError {
    #[error("input error: {0}")]
    Input(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("training diverged at step {step}: {message}")]
    Diverged { step: usize, message: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
