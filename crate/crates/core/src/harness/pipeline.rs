use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricSet};
use super::train::{train_adapter, TrainingLog};
use super::{DataSource, ExperimentConfig, HarnessError};
use crate::adapter::{AdapterDims, AdapterParams, CovariateManifest, EmbeddedSet, Variant};
use crate::backbone::{pretrain_backbone, Backbone, ForeignProvider, ProviderSet, ProviderSpec};
use crate::datagen::{
    few_shot, generate_var_dataset, load_csv, load_schema, make_windows, normalize_window, GroundTruthCausality,
    Modality, SeriesFrame, WindowSets,
};

pub struct Dataset {
    pub frame: SeriesFrame,
    /// Planted structure, for synthetic data only.
    pub truth: Option<GroundTruthCausality>,
}

pub fn load_dataset(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset, HarnessError> {
    match &cfg.data {
        DataSource::Synthetic(g) => {
            let (frame, truth) = generate_var_dataset(g, seed)?;
            Ok(Dataset { frame, truth: Some(truth) })
        }
        DataSource::Csv { csv, schema } => {
            let schema = load_schema(schema)?;
            Ok(Dataset { frame: load_csv(csv, &schema)?, truth: None })
        }
    }
}

/// Instance-normalized train/val/test windows; the few-shot fraction trims
/// the training windows only.
pub fn prepare_windows(cfg: &ExperimentConfig, frame: &SeriesFrame) -> Result<WindowSets, HarnessError> {
    let w = &cfg.window;
    let mut sets = make_windows(frame, w.lookback, w.horizon, w.stride, w.split)?.map(normalize_window);
    sets.train = few_shot(&sets.train, cfg.few_shot)?;
    if sets.train.is_empty() || sets.val.is_empty() || sets.test.is_empty() {
        return Err(HarnessError::Config(format!(
            "series of length {} yields empty splits for lookback {} + horizon {}: {}",
            frame.len(),
            w.lookback,
            w.horizon,
            sets.warnings.join("; ")
        )));
    }
    Ok(sets)
}

/// One stand-in encoder per foreign modality present in the frame.
pub fn build_providers(cfg: &ExperimentConfig, frame: &SeriesFrame) -> Result<ProviderSet, HarnessError> {
    let mut set = ProviderSet::default();
    for (k, m) in [Modality::Txt, Modality::Img].into_iter().enumerate() {
        let widths: Vec<usize> =
            frame.channels().iter().filter(|c| c.spec.modality == m).map(|c| c.spec.width).collect();
        let Some(&width) = widths.first() else { continue };
        if widths.iter().any(|&w| w != width) {
            return Err(HarnessError::Config(format!("all {m} channels must share one width, found {widths:?}")));
        }
        let spec = ProviderSpec { input_width: width, dim: cfg.adapter.provider_dim, seed: cfg.adapter.provider_seed + k as u64 };
        let p = Some(ForeignProvider::new(spec)?);
        match m {
            Modality::Txt => set.txt = p,
            _ => set.img = p,
        }
    }
    Ok(set)
}

pub fn pretrain(cfg: &ExperimentConfig, sets: &WindowSets, seed: u64) -> Result<Backbone, HarnessError> {
    Ok(pretrain_backbone(&sets.train, &sets.val, &cfg.backbone, &cfg.pretrain, seed)?)
}

/// Frozen-side inputs for all three splits.
pub struct Embedded {
    pub manifest: CovariateManifest,
    pub providers: ProviderSet,
    pub train: EmbeddedSet,
    pub val: EmbeddedSet,
    pub test: EmbeddedSet,
}

pub fn embed_sets(
    cfg: &ExperimentConfig,
    bb: &Backbone,
    providers: &ProviderSet,
    sets: &WindowSets,
) -> Result<Embedded, HarnessError> {
    let manifest = CovariateManifest::from_window(&sets.train[0], bb, providers)?;
    let h = cfg.window.horizon;
    let build = |w| EmbeddedSet::build(bb, providers, &manifest, w, h);
    Ok(Embedded {
        train: build(&sets.train)?,
        val: build(&sets.val)?,
        test: build(&sets.test)?,
        manifest,
        providers: providers.clone(),
    })
}

pub fn adapter_dims(cfg: &ExperimentConfig, bb: &Backbone) -> AdapterDims {
    let mut dims = AdapterDims::for_backbone(bb, cfg.window.horizon);
    if let Some(h) = cfg.adapter.hidden {
        dims.hidden = h;
        dims.mlp_hidden = h;
    }
    if let Some(m) = cfg.adapter.mlp_hidden {
        dims.mlp_hidden = m;
    }
    dims
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub seed: u64,
    pub covariates: Vec<String>,
    pub gate_weights: Vec<f64>,
    pub gate_argmax: Option<String>,
    pub val: MetricSet,
    pub test: MetricSet,
    /// Frozen backbone alone on the test split.
    pub baseline_test: MetricSet,
    pub backbone_hash: String,
}

pub struct RunOutput {
    pub params: AdapterParams,
    pub log: TrainingLog,
    pub summary: RunSummary,
}

/// Adaptation and evaluation of one variant on already embedded splits.
pub fn adapt_and_evaluate(
    cfg: &ExperimentConfig,
    bb: &Backbone,
    emb: &Embedded,
    variant: Variant,
    seed: u64,
) -> Result<RunOutput, HarnessError> {
    let hash_before = bb.weights_hash();
    let dims = adapter_dims(cfg, bb);
    let init = AdapterParams::init(&dims, &emb.manifest, variant, cfg.adapter.init_mode, seed)?;
    let (params, log) = train_adapter(&cfg.train, bb, &init, &emb.train, &emb.val, seed)?;
    let baseline = AdapterParams::init(&dims, &emb.manifest, Variant::WoCovariate, Default::default(), seed)?;
    let n = cfg.eval.crps_samples;
    let summary = RunSummary {
        variant,
        seed,
        covariates: emb.manifest.names().into_iter().map(String::from).collect(),
        gate_weights: params.gate_weights()?,
        gate_argmax: params.gate_argmax()?.map(|i| emb.manifest.entries[i].name.clone()),
        val: evaluate(&params, bb, &emb.val, n, seed)?,
        test: evaluate(&params, bb, &emb.test, n, seed)?,
        baseline_test: evaluate(&baseline, bb, &emb.test, n, seed)?,
        backbone_hash: bb.weights_hash(),
    };
    if summary.backbone_hash != hash_before {
        return Err(HarnessError::Contract("backbone weights changed during adaptation".into()));
    }
    Ok(RunOutput { params, log, summary })
}

/// Everything one seed needs before adaptation: data, windows, a pretrained
/// backbone and the embedded splits.
pub struct Prepared {
    pub dataset: Dataset,
    pub windows: WindowSets,
    pub backbone: Backbone,
    pub embedded: Embedded,
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64, backbone: Option<Backbone>) -> Result<Prepared, HarnessError> {
    let dataset = load_dataset(cfg, seed)?;
    let windows = prepare_windows(cfg, &dataset.frame)?;
    let backbone = match backbone {
        Some(b) => b,
        None => pretrain(cfg, &windows, seed)?,
    };
    let providers = build_providers(cfg, &dataset.frame)?;
    let embedded = embed_sets(cfg, &backbone, &providers, &windows)?;
    Ok(Prepared { dataset, windows, backbone, embedded })
}

/// Pretrain, adapt and evaluate the configured variant for one seed.
pub fn run_pipeline(cfg: &ExperimentConfig, seed: u64) -> Result<(Prepared, RunOutput), HarnessError> {
    let prepared = prepare(cfg, seed, None)?;
    let out = adapt_and_evaluate(cfg, &prepared.backbone, &prepared.embedded, cfg.adapter.variant, seed)?;
    Ok((prepared, out))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelResult {
    pub target: String,
    pub covariates: Vec<String>,
    pub test: MetricSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultivariateResult {
    pub channels: Vec<ChannelResult>,
    pub mse: f64,
    pub mae: f64,
}

/// Channel independence: every ts channel in turn is the target and the
/// remaining ts channels are its covariates. Combined metrics are plain
/// means over channels.
pub fn run_multivariate(cfg: &ExperimentConfig, frame: &SeriesFrame, seed: u64) -> Result<MultivariateResult, HarnessError> {
    let names: Vec<String> =
        frame.channels().iter().filter(|c| c.spec.modality == Modality::Ts).map(|c| c.spec.name.clone()).collect();
    if names.len() < 2 {
        return Err(HarnessError::Config(format!("multivariate run needs at least 2 ts channels, found {}", names.len())));
    }
    let channels = names
        .par_iter()
        .map(|name| {
            let f = frame.retarget(name)?;
            let windows = prepare_windows(cfg, &f)?;
            let bb = pretrain(cfg, &windows, seed)?;
            let emb = embed_sets(cfg, &bb, &ProviderSet::default(), &windows)?;
            let out = adapt_and_evaluate(cfg, &bb, &emb, cfg.adapter.variant, seed)?;
            Ok(ChannelResult { target: name.clone(), covariates: out.summary.covariates, test: out.summary.test })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let n = channels.len() as f64;
    Ok(MultivariateResult {
        mse: channels.iter().map(|c| c.test.mse).sum::<f64>() / n,
        mae: channels.iter().map(|c| c.test.mae).sum::<f64>() / n,
        channels,
    })
}
