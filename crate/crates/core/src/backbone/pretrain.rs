use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backbone, BackboneArch, BackboneError, HeadKind, PretrainMeta};
use crate::datagen::ForecastWindow;
use crate::numerics::{Adam, BoundParams, Graph, NodeId, NumericsError, ParamStore, Tensor2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 15, lr: 1e-3, batch_size: 64 }
    }
}

fn data_hash(windows: &[ForecastWindow]) -> String {
    let mut h = Sha256::new();
    for w in windows {
        for v in w.lookback.iter().chain(&w.horizon_truth) {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

struct Batch {
    tokens: Tensor2,
    truth: Tensor2,
}

fn make_batch(bb: &Backbone, windows: &[&ForecastWindow], horizon: usize) -> Result<Batch, BackboneError> {
    let mut tokens = Vec::with_capacity(windows.len());
    let mut truth = Vec::with_capacity(windows.len() * horizon);
    for w in windows {
        tokens.push(bb.last_token(&w.lookback)?);
        truth.extend_from_slice(&w.horizon_truth[..horizon]);
    }
    Ok(Batch { tokens: Tensor2::vstack(&tokens)?, truth: Tensor2::from_vec(windows.len(), horizon, truth)? })
}

/// Records the training loss of `weights` on one batch. Returns the loss node
/// and the bound weight leaves.
fn record_loss(
    bb: &Backbone,
    g: &mut Graph,
    weights: &ParamStore,
    batch: &Batch,
    horizon: usize,
) -> Result<(NodeId, BoundParams), BackboneError> {
    let w = weights.register(g);
    let tokens = g.constant(batch.tokens.clone());
    let truth = g.constant(batch.truth.clone());
    let emb = bb.trunk_on_graph(g, &w, tokens)?;
    let full = bb.head_on_graph(g, &w, emb)?;
    let mean = g.slice_cols(full, 0, horizon)?;
    let loss = match bb.arch().head {
        HeadKind::Point => g.mse(mean, truth)?,
        HeadKind::Gaussian => {
            // mean(s + ½ (y − μ)² e^{−2s}); the constant ½·ln 2π is dropped.
            let s_full = bb.log_std_on_graph(g, &w, emb)?;
            let s = g.slice_cols(s_full, 0, horizon)?;
            let diff = g.sub(mean, truth)?;
            let sq = g.hadamard(diff, diff)?;
            let m2s = g.scale(s, -2.0)?;
            let prec = g.exp(m2s)?;
            let quad = g.hadamard(sq, prec)?;
            let quad = g.scale(quad, 0.5)?;
            let nll = g.add(quad, s)?;
            g.mean(nll)?
        }
    };
    Ok((loss, w))
}

fn mean_mse(bb: &Backbone, windows: &[ForecastWindow], horizon: usize) -> Result<f64, BackboneError> {
    if windows.is_empty() {
        return Ok(f64::NAN);
    }
    let refs: Vec<&ForecastWindow> = windows.iter().collect();
    let batch = make_batch(bb, &refs, horizon)?;
    let emb = bb.embed_tokens(batch.tokens)?;
    let pred = bb.head_forecast_batch(&emb, horizon)?;
    Ok(pred.sub(&batch.truth)?.data().iter().map(|d| d * d).sum::<f64>() / pred.len() as f64)
}

fn diverged(step: usize) -> impl Fn(BackboneError) -> BackboneError {
    move |e| match e {
        BackboneError::Numerics(NumericsError::NonFinite(m)) => BackboneError::Diverged { step, message: m },
        other => other,
    }
}

/// MSE (or Gaussian NLL) pretraining on univariate windows. The horizon used
/// for the loss is `min(horizon_max, window horizon)`. Returns the weights
/// with the best validation MSE (the last epoch when `val` is empty).
pub fn pretrain_backbone(
    train: &[ForecastWindow],
    val: &[ForecastWindow],
    arch: &BackboneArch,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<Backbone, BackboneError> {
    let init = Backbone::init(arch, seed)?;
    let horizon = train.iter().chain(val).map(|w| w.horizon()).min().unwrap_or(arch.horizon_max).min(arch.horizon_max);
    for w in train.iter().chain(val) {
        if w.lookback_len() % arch.patch_len != 0 {
            return Err(BackboneError::Input(format!(
                "patch length {} does not divide lookback {}",
                arch.patch_len,
                w.lookback_len()
            )));
        }
    }
    if cfg.epochs > 0 && (train.is_empty() || cfg.batch_size == 0) {
        return Err(BackboneError::Config("pretraining needs training windows and a positive batch size".into()));
    }

    let mut meta = PretrainMeta { seed, data_hash: data_hash(train), ..Default::default() };
    let mut current = init.clone();
    let mut best = init;
    let mut best_val = mean_mse(&best, val, horizon)?;
    let mut adam = Adam::new(cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba55);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0usize;

    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            step += 1;
            let refs: Vec<&ForecastWindow> = chunk.iter().map(|&i| &train[i]).collect();
            let batch = make_batch(&current, &refs, horizon)?;
            let mut g = Graph::new();
            let (loss, bound) =
                record_loss(&current, &mut g, current.weights(), &batch, horizon).map_err(diverged(step))?;
            let lv = g.value(loss).get(0, 0);
            let grads = g.backward(loss)?;
            let gs: Vec<Tensor2> =
                bound.ids().zip(current.weights().tensors()).map(|(id, p)| grads.get_or_zeros(id, p)).collect();
            let mut weights = current.weights().clone();
            adam.step(&mut weights.tensors_mut(), &gs)
                .map_err(|e| diverged(step)(BackboneError::Numerics(e)))?;
            current = Backbone::from_trusted(arch.clone(), weights, PretrainMeta::default());
            total += lv;
            batches += 1;
        }
        meta.train_loss.push(total / batches as f64);
        meta.epochs_run += 1;
        if !val.is_empty() {
            let v = mean_mse(&current, val, horizon)?;
            meta.val_mse.push(v);
            if v < best_val || best_val.is_nan() {
                best_val = v;
                best = current.clone();
            }
        } else {
            best = current.clone();
        }
    }
    meta.best_val_mse = if best_val.is_nan() { None } else { Some(best_val) };
    Ok(Backbone::from_trusted(arch.clone(), best.weights().clone(), meta))
}
