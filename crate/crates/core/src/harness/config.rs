use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::adapter::{InitMode, Variant};
use crate::backbone::{BackboneArch, PretrainConfig};
use crate::datagen::{GeneratorConfig, SplitFractions};
use crate::granger::Criterion;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase")]
pub enum DataSource {
    /// Generated from the seed on every run.
    Synthetic(GeneratorConfig),
    /// Paths are resolved relative to the config file.
    Csv { csv: PathBuf, schema: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(GeneratorConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowConfig {
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub split: SplitFractions,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { lookback: 96, horizon: 24, stride: 1, split: SplitFractions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdapterConfig {
    pub variant: Variant,
    pub init_mode: InitMode,
    /// Unified hidden width; the backbone width when absent.
    pub hidden: Option<usize>,
    /// Width of the modulation MLP's hidden layer; `hidden` when absent.
    pub mlp_hidden: Option<usize>,
    /// Output width of the txt and img stand-in encoders.
    pub provider_dim: usize,
    pub provider_seed: u64,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Full,
            init_mode: InitMode::ZeroInit,
            hidden: None,
            mlp_hidden: None,
            provider_dim: 16,
            provider_seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_grid: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr_grid: vec![1e-3, 3e-3], batch_size: 32, max_epochs: 50, patience: 3 }
    }
}

impl TrainConfig {
    /// Small learning rates with large batches, as used for big pretrained backbones.
    pub fn small_lr_protocol() -> Self {
        Self { lr_grid: vec![5e-6, 1e-5, 2e-5], batch_size: 128, max_epochs: 50, patience: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrangerConfig {
    pub l_max: usize,
    pub criterion: Criterion,
}

impl Default for GrangerConfig {
    fn default() -> Self {
        Self { l_max: 5, criterion: Criterion::Aic }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Samples drawn per window for CRPS when the backbone has a Gaussian head.
    pub crps_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { crps_samples: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seeds: Vec<u64>,
    pub few_shot: f64,
    pub data: DataSource,
    pub window: WindowConfig,
    pub backbone: BackboneArch,
    pub pretrain: PretrainConfig,
    pub adapter: AdapterConfig,
    pub train: TrainConfig,
    pub granger: GrangerConfig,
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seeds: vec![0],
            few_shot: 1.0,
            data: DataSource::default(),
            window: WindowConfig::default(),
            backbone: BackboneArch::default(),
            pretrain: PretrainConfig::default(),
            adapter: AdapterConfig::default(),
            train: TrainConfig::default(),
            granger: GrangerConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative CSV paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            HarnessError::Config(m) => HarnessError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        if let DataSource::Csv { csv, schema } = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [csv, schema] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: String| Err(HarnessError::Config(m));
        if self.version != CONFIG_VERSION {
            return fail(format!("unsupported config version {} (expected {CONFIG_VERSION})", self.version));
        }
        if self.seeds.is_empty() {
            return fail("seeds must not be empty".into());
        }
        if !(self.few_shot > 0.0 && self.few_shot <= 1.0) {
            return fail(format!("few_shot {} must lie in (0, 1]", self.few_shot));
        }
        let t = &self.train;
        if t.lr_grid.is_empty() || t.lr_grid.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return fail("train.lr_grid must be a non-empty list of finite, non-negative rates".into());
        }
        if t.patience == 0 || t.batch_size == 0 {
            return fail("train.patience and train.batch_size must be at least 1".into());
        }
        let w = &self.window;
        if w.lookback == 0 || w.horizon == 0 || w.stride == 0 {
            return fail("window lookback, horizon and stride must be positive".into());
        }
        w.split.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if w.split.val <= 0.0 || w.split.test <= 0.0 {
            return fail("window.split needs non-empty val and test fractions".into());
        }
        self.backbone.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if w.lookback % self.backbone.patch_len != 0 {
            return fail(format!("patch length {} must divide lookback {}", self.backbone.patch_len, w.lookback));
        }
        if w.horizon > self.backbone.horizon_max {
            return fail(format!("horizon {} exceeds backbone horizon_max {}", w.horizon, self.backbone.horizon_max));
        }
        if self.granger.l_max == 0 {
            return fail("granger.l_max must be at least 1".into());
        }
        if self.adapter.provider_dim == 0 || self.adapter.hidden == Some(0) || self.adapter.mlp_hidden == Some(0) {
            return fail("adapter widths must be positive".into());
        }
        if let DataSource::Synthetic(g) = &self.data {
            g.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn primary_seed(&self) -> u64 {
        self.seeds[0]
    }
}
