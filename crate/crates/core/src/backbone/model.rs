use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackboneError;
use crate::datagen::Modality;
use crate::numerics::{BoundParams, Graph, NodeId, ParamStore, Tensor2};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    /// Point forecast.
    Point,
    /// Mean and log-std per horizon step.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackboneArch {
    pub patch_len: usize,
    pub d_model: usize,
    pub blocks: usize,
    pub horizon_max: usize,
    pub head: HeadKind,
}

impl Default for BackboneArch {
    fn default() -> Self {
        Self { patch_len: 16, d_model: 32, blocks: 2, horizon_max: 64, head: HeadKind::Point }
    }
}

impl BackboneArch {
    pub fn validate(&self) -> Result<(), BackboneError> {
        if self.patch_len == 0 || self.d_model == 0 || self.horizon_max == 0 {
            return Err(BackboneError::Config("patch_len, d_model and horizon_max must be positive".into()));
        }
        Ok(())
    }

    /// Width of one token: the current patch plus its predecessor.
    pub fn token_width(&self) -> usize {
        2 * self.patch_len
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainMeta {
    pub seed: u64,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_mse: Vec<f64>,
    pub best_val_mse: Option<f64>,
    pub data_hash: String,
}

/// Frozen patch forecaster.
///
/// Tokens are non-overlapping patches aligned to the end of the input; each
/// token sees its own patch and the previous one (zero-padded at the start).
/// The trunk is a linear patch embedding followed by residual `h + SiLU(hW + b)`
/// blocks; the head maps one embedding to `horizon_max` outputs.
///
/// All weights are private and every method takes `&self`: a backbone cannot
/// be modified after construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Backbone {
    arch: BackboneArch,
    weights: ParamStore,
    meta: PretrainMeta,
}

pub(crate) fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor2 {
    use rand::Rng;
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect();
    Tensor2::from_vec(rows, cols, data).expect("finite init")
}

impl Backbone {
    /// Freshly initialized weights: Xavier matrices, zero biases.
    pub fn init(arch: &BackboneArch, seed: u64) -> Result<Backbone, BackboneError> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p2, d, h) = (arch.token_width(), arch.d_model, arch.horizon_max);
        let mut w = ParamStore::new();
        w.insert("patch.w", xavier(p2, d, &mut rng));
        w.insert("patch.b", Tensor2::zeros(1, d));
        for k in 0..arch.blocks {
            w.insert(format!("block{k}.w"), xavier(d, d, &mut rng));
            w.insert(format!("block{k}.b"), Tensor2::zeros(1, d));
        }
        w.insert("head.w", xavier(d, h, &mut rng));
        w.insert("head.b", Tensor2::zeros(1, h));
        if arch.head == HeadKind::Gaussian {
            w.insert("head_scale.w", Tensor2::zeros(d, h));
            w.insert("head_scale.b", Tensor2::zeros(1, h));
        }
        Ok(Backbone { arch: arch.clone(), weights: w, meta: PretrainMeta { seed, ..Default::default() } })
    }

    /// Assembles a backbone from weights with the layout produced by [`Backbone::init`].
    pub(super) fn from_trusted(arch: BackboneArch, weights: ParamStore, meta: PretrainMeta) -> Self {
        Backbone { arch, weights, meta }
    }

    pub(crate) fn from_parts(arch: BackboneArch, weights: ParamStore, meta: PretrainMeta) -> Result<Self, BackboneError> {
        let reference = Backbone::init(&arch, 0)?;
        for (name, t) in reference.weights.iter() {
            match weights.get(name) {
                Some(w) if w.shape() == t.shape() => {}
                Some(w) => {
                    return Err(BackboneError::Checkpoint(format!(
                        "weight `{name}` has shape {:?}, expected {:?}",
                        w.shape(),
                        t.shape()
                    )))
                }
                None => return Err(BackboneError::Checkpoint(format!("missing weight `{name}`"))),
            }
        }
        if weights.len() != reference.weights.len() {
            return Err(BackboneError::Checkpoint("unexpected extra weights".into()));
        }
        Ok(Backbone { arch, weights, meta })
    }

    pub fn arch(&self) -> &BackboneArch {
        &self.arch
    }

    pub fn meta(&self) -> &PretrainMeta {
        &self.meta
    }

    pub fn weights(&self) -> &ParamStore {
        &self.weights
    }

    pub fn d_model(&self) -> usize {
        self.arch.d_model
    }

    pub fn horizon_max(&self) -> usize {
        self.arch.horizon_max
    }

    /// Always true: there is no mutable path to the weights.
    pub fn is_frozen(&self) -> bool {
        true
    }

    /// SHA-256 over weight names, shapes and IEEE-754 bytes.
    pub fn weights_hash(&self) -> String {
        hash_params(&self.weights)
    }

    pub(crate) fn bind_constants(&self, g: &mut Graph) -> BoundParams {
        self.weights.register_constant(g)
    }

    /// Token matrix (`patches × 2P`) for a scalar series.
    pub fn tokens(&self, series: &[f64]) -> Result<Tensor2, BackboneError> {
        let p = self.arch.patch_len;
        if series.len() < p {
            return Err(BackboneError::Input(format!("series of length {} is shorter than one patch ({p})", series.len())));
        }
        let n = series.len() / p;
        let offset = series.len() - n * p;
        let mut data = Vec::with_capacity(n * 2 * p);
        for j in 0..n {
            let start = offset + j * p;
            if j == 0 {
                data.extend(std::iter::repeat_n(0.0, p));
            } else {
                data.extend_from_slice(&series[start - p..start]);
            }
            data.extend_from_slice(&series[start..start + p]);
        }
        Ok(Tensor2::from_vec(n, 2 * p, data)?)
    }

    /// Token of the last patch only, as a `1 × 2P` row.
    pub fn last_token(&self, series: &[f64]) -> Result<Tensor2, BackboneError> {
        let p = self.arch.patch_len;
        if series.len() < p {
            return Err(BackboneError::Input(format!("series of length {} is shorter than one patch ({p})", series.len())));
        }
        let n = series.len();
        let mut data = Vec::with_capacity(2 * p);
        if n >= 2 * p {
            data.extend_from_slice(&series[n - 2 * p..]);
        } else {
            data.extend(std::iter::repeat_n(0.0, p));
            data.extend_from_slice(&series[n - p..]);
        }
        Ok(Tensor2::from_vec(1, 2 * p, data)?)
    }

    pub(crate) fn trunk_on_graph(&self, g: &mut Graph, w: &BoundParams, tokens: NodeId) -> Result<NodeId, BackboneError> {
        let pw = w.id("patch.w")?;
        let pb = w.id("patch.b")?;
        let z = g.matmul(tokens, pw)?;
        let mut h = g.add_row(z, pb)?;
        for k in 0..self.arch.blocks {
            let bw = w.id(&format!("block{k}.w"))?;
            let bb = w.id(&format!("block{k}.b"))?;
            let z = g.matmul(h, bw)?;
            let z = g.add_row(z, bb)?;
            let a = g.silu(z)?;
            h = g.add(h, a)?;
        }
        Ok(h)
    }

    /// Head applied to a `B × D` embedding node, full `B × horizon_max` output.
    pub(crate) fn head_on_graph(&self, g: &mut Graph, w: &BoundParams, emb: NodeId) -> Result<NodeId, BackboneError> {
        let hw = w.id("head.w")?;
        let hb = w.id("head.b")?;
        let z = g.matmul(emb, hw)?;
        Ok(g.add_row(z, hb)?)
    }

    pub(crate) fn log_std_on_graph(&self, g: &mut Graph, w: &BoundParams, emb: NodeId) -> Result<NodeId, BackboneError> {
        let hw = w.id("head_scale.w")?;
        let hb = w.id("head_scale.b")?;
        let z = g.matmul(emb, hw)?;
        Ok(g.add_row(z, hb)?)
    }

    /// Per-step (per-patch) embeddings from the frozen trunk, `patches × D`.
    pub fn extract_ts_embeddings(&self, series: &[f64]) -> Result<Tensor2, BackboneError> {
        let tokens = self.tokens(series)?;
        self.embed_tokens(tokens)
    }

    /// Trunk applied to a token matrix, one embedding row per token row.
    pub fn embed_tokens(&self, tokens: Tensor2) -> Result<Tensor2, BackboneError> {
        let mut g = Graph::new();
        let w = self.bind_constants(&mut g);
        let t = g.constant(tokens);
        let h = self.trunk_on_graph(&mut g, &w, t)?;
        Ok(g.value(h).clone())
    }

    /// Last-step target embedding.
    pub fn extract_target_embedding(&self, lookback: &[f64]) -> Result<Vec<f64>, BackboneError> {
        let steps = self.extract_ts_embeddings(lookback)?;
        aggregate_embedding(&steps, Modality::Ts)
    }

    /// Frozen head on `B × D` embeddings, truncated to the first `horizon` outputs.
    pub fn head_forecast_batch(&self, emb: &Tensor2, horizon: usize) -> Result<Tensor2, BackboneError> {
        self.check_horizon(horizon)?;
        let mut g = Graph::new();
        let w = self.bind_constants(&mut g);
        let e = g.constant(emb.clone());
        let out = self.head_on_graph(&mut g, &w, e)?;
        let out = g.slice_cols(out, 0, horizon)?;
        Ok(g.value(out).clone())
    }

    pub fn head_forecast(&self, emb: &[f64], horizon: usize) -> Result<Vec<f64>, BackboneError> {
        let e = Tensor2::row_vector(emb.to_vec())?;
        Ok(self.head_forecast_batch(&e, horizon)?.into_vec())
    }

    /// Predictive log-std of the Gaussian head (unmodulated), `B × horizon`.
    pub fn head_log_std_batch(&self, emb: &Tensor2, horizon: usize) -> Result<Tensor2, BackboneError> {
        self.check_horizon(horizon)?;
        if self.arch.head != HeadKind::Gaussian {
            return Err(BackboneError::Config("backbone has a point head".into()));
        }
        let mut g = Graph::new();
        let w = self.bind_constants(&mut g);
        let e = g.constant(emb.clone());
        let out = self.log_std_on_graph(&mut g, &w, e)?;
        let out = g.slice_cols(out, 0, horizon)?;
        Ok(g.value(out).clone())
    }

    pub(crate) fn check_horizon(&self, horizon: usize) -> Result<(), BackboneError> {
        if horizon == 0 || horizon > self.arch.horizon_max {
            return Err(BackboneError::Contract(format!(
                "horizon {horizon} outside 1..={}",
                self.arch.horizon_max
            )));
        }
        Ok(())
    }
}

pub(crate) fn hash_params(p: &ParamStore) -> String {
    let mut h = Sha256::new();
    for (name, t) in p.iter() {
        h.update(name.as_bytes());
        h.update((t.rows() as u64).to_le_bytes());
        h.update((t.cols() as u64).to_le_bytes());
        for v in t.data() {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

/// Collapses per-step embeddings to one vector: last step for ts, mean over steps otherwise.
pub fn aggregate_embedding(steps: &Tensor2, modality: Modality) -> Result<Vec<f64>, BackboneError> {
    if steps.rows() == 0 {
        return Err(BackboneError::Input("cannot aggregate zero embedding steps".into()));
    }
    Ok(match modality {
        Modality::Ts => steps.row(steps.rows() - 1).to_vec(),
        Modality::Txt | Modality::Img => {
            let n = steps.rows() as f64;
            steps.sum_rows().into_vec().into_iter().map(|v| v / n).collect()
        }
    })
}
