use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backbone, BackboneArch, BackboneError, PretrainMeta};
use crate::numerics::ParamStore;

pub const BACKBONE_FORMAT: &str = "cora-backbone";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct BackboneCheckpoint {
    format: String,
    version: u32,
    arch: BackboneArch,
    weights_hash: String,
    meta: PretrainMeta,
    weights: ParamStore,
}

impl Backbone {
    pub fn to_json(&self) -> String {
        let ck = BackboneCheckpoint {
            format: BACKBONE_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.arch().clone(),
            weights_hash: self.weights_hash(),
            meta: self.meta().clone(),
            weights: self.weights().clone(),
        };
        serde_json::to_string_pretty(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Backbone, BackboneError> {
        let ck: BackboneCheckpoint =
            serde_json::from_str(text).map_err(|e| BackboneError::Checkpoint(e.to_string()))?;
        if ck.format != BACKBONE_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(BackboneError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        let bb = Backbone::from_parts(ck.arch, ck.weights, ck.meta)?;
        if bb.weights_hash() != ck.weights_hash {
            return Err(BackboneError::Checkpoint("weights hash mismatch".into()));
        }
        Ok(bb)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackboneError> {
        std::fs::write(path, self.to_json() + "\n")
            .map_err(|e| BackboneError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Backbone, BackboneError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackboneError::Checkpoint(format!("{}: {e}", path.display())))?;
        Backbone::from_json(&text)
    }
}
