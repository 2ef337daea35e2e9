//! Trainable conditioning around the frozen backbone: per-modality
//! alignment, a softmax gate over covariates, and shift/scale/gate
//! modulation of the target embedding around the frozen head.

mod checkpoint;
mod embedded;
mod forward;
mod params;

pub use checkpoint::ADAPTER_FORMAT;
pub use embedded::EmbeddedSet;
pub use forward::{adaln_modulate, align_embeddings, cora_forward, gce_mix, ConditionVector, ForwardNodes};
pub use params::{
    init_adapter, AdapterDims, AdapterParams, CovariateManifest, InitMode, ManifestEntry, Variant, GATE, MLP_HIDDEN_B,
    MLP_HIDDEN_W, MLP_OUT_B, MLP_OUT_W, PROJ_W, SFT_BIAS,
};

use thiserror::Error;

use crate::backbone::BackboneError;
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Parameters for the named variant; their forward pass is the variant's.
pub fn make_variant(
    kind: &str,
    dims: &AdapterDims,
    manifest: &CovariateManifest,
    mode: InitMode,
    seed: u64,
) -> Result<AdapterParams, AdapterError> {
    let variant: Variant = kind.parse()?;
    AdapterParams::init(dims, manifest, variant, mode, seed)
}
