use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdapterDims, AdapterError, AdapterParams, CovariateManifest, InitMode, Variant};
use crate::backbone::CHECKPOINT_VERSION;
use crate::numerics::ParamStore;

pub const ADAPTER_FORMAT: &str = "cora-adapter";

#[derive(Serialize, Deserialize)]
struct AdapterCheckpoint {
    format: String,
    version: u32,
    variant: Variant,
    init_mode: InitMode,
    dims: AdapterDims,
    manifest: CovariateManifest,
    backbone_hash: String,
    params_hash: String,
    params: ParamStore,
}

impl AdapterParams {
    /// Serializes the adapter together with the hash of the backbone it was
    /// trained against.
    pub fn to_json(&self, backbone_hash: &str) -> String {
        let ck = AdapterCheckpoint {
            format: ADAPTER_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            variant: self.variant,
            init_mode: self.init_mode,
            dims: self.dims.clone(),
            manifest: self.manifest.clone(),
            backbone_hash: backbone_hash.into(),
            params_hash: self.hash(),
            params: self.store.clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    /// Returns the adapter and the backbone hash it was saved with.
    pub fn from_json(text: &str) -> Result<(AdapterParams, String), AdapterError> {
        let ck: AdapterCheckpoint = serde_json::from_str(text).map_err(|e| AdapterError::Checkpoint(e.to_string()))?;
        if ck.format != ADAPTER_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(AdapterError::Checkpoint(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        let reference = AdapterParams::init(&ck.dims, &ck.manifest, ck.variant, ck.init_mode, 0)?;
        let layout = |s: &ParamStore| s.iter().map(|(n, t)| (n.to_string(), t.shape())).collect::<Vec<_>>();
        if layout(&reference.store) != layout(&ck.params) {
            return Err(AdapterError::Checkpoint("parameter layout does not match variant and manifest".into()));
        }
        let params = AdapterParams { store: ck.params, ..reference };
        if params.hash() != ck.params_hash {
            return Err(AdapterError::Checkpoint("parameter hash mismatch".into()));
        }
        Ok((params, ck.backbone_hash))
    }

    pub fn save(&self, path: &Path, backbone_hash: &str) -> Result<(), AdapterError> {
        std::fs::write(path, self.to_json(backbone_hash) + "\n")
            .map_err(|e| AdapterError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(AdapterParams, String), AdapterError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| AdapterError::Checkpoint(format!("{}: {e}", path.display())))?;
        AdapterParams::from_json(&text)
    }
}
