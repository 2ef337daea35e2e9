use super::params::{align_b, align_w, GATE, MLP_HIDDEN_B, MLP_HIDDEN_W, MLP_OUT_B, MLP_OUT_W, PROJ_W, SFT_BIAS};
use super::{AdapterError, AdapterParams, Variant};
use crate::backbone::{embed_window, Backbone, EmbeddingBundle, ProviderSet};
use crate::datagen::ForecastWindow;
use crate::numerics::{BoundParams, Graph, NodeId, Tensor2};

/// Gated covariate mixture for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionVector {
    pub h_cond: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Node handles of one recorded forward pass.
#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    /// `B × H` forecast.
    pub forecast: NodeId,
    /// `B × D_ts` input fed to the frozen head.
    pub head_input: NodeId,
    /// `1 × N` mixing weights when the variant mixes covariates.
    pub weights: Option<NodeId>,
}

impl AdapterParams {
    /// Row block `X_i W^{m_i} + b^{m_i}` for covariate `i`, `X_i` being `B × D_{m_i}`.
    pub(crate) fn record_align(&self, g: &mut Graph, p: &BoundParams, i: usize, x: NodeId) -> Result<NodeId, AdapterError> {
        let entry = self
            .manifest
            .entries
            .get(i)
            .ok_or_else(|| AdapterError::Contract(format!("covariate index {i} outside manifest of {}", self.manifest.len())))?;
        let got = g.value(x).cols();
        if got != entry.dim {
            return Err(AdapterError::Dimension(format!(
                "covariate `{}` has embedding width {got}, expected {}",
                entry.name, entry.dim
            )));
        }
        let w = p.id(&align_w(entry.modality))?;
        let b = p.id(&align_b(entry.modality))?;
        let z = g.matmul(x, w)?;
        Ok(g.add_row(z, b)?)
    }

    /// Mixes aligned blocks (each `B × D`) into `B × D`.
    pub(crate) fn record_mix(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        aligned: &[NodeId],
    ) -> Result<(NodeId, NodeId), AdapterError> {
        let n = self.manifest.len();
        if aligned.len() != n || n == 0 {
            return Err(AdapterError::Contract(format!("{} aligned covariates for a gate of length {n}", aligned.len())));
        }
        let weights = if self.variant == Variant::WoSelection {
            g.constant(Tensor2::filled(1, n, 1.0 / n as f64))
        } else {
            let gate = p.id(GATE)?;
            g.softmax_rows(gate)?
        };
        let mut h = None;
        for (i, &a) in aligned.iter().enumerate() {
            let term = if self.variant == Variant::WoSelection {
                g.scale(a, 1.0 / n as f64)?
            } else {
                let w = g.slice_cols(weights, i, i + 1)?;
                g.scale_by(a, w)?
            };
            h = Some(match h {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        Ok((h.expect("n > 0"), weights))
    }

    /// `(γ, β, α)` from the condition, `B × D_ts`, `B × D_ts`, `B × H`.
    pub(crate) fn record_mlp(&self, g: &mut Graph, p: &BoundParams, h: NodeId) -> Result<(NodeId, NodeId, NodeId), AdapterError> {
        let z = g.matmul(h, p.id(MLP_HIDDEN_W)?)?;
        let z = g.add_row(z, p.id(MLP_HIDDEN_B)?)?;
        let a = g.silu(z)?;
        let o = g.matmul(a, p.id(MLP_OUT_W)?)?;
        let o = g.add_row(o, p.id(MLP_OUT_B)?)?;
        let d = self.dims.d_ts;
        let gamma = g.slice_cols(o, 0, d)?;
        let beta = g.slice_cols(o, d, 2 * d)?;
        let alpha = g.slice_cols(o, 2 * d, 2 * d + self.dims.horizon)?;
        Ok((gamma, beta, alpha))
    }

    /// Shift-and-scale of the target embedding around the frozen head:
    /// `(1+α) ⊙ Head(γ + (1+β) ⊙ E)`, head output truncated to `H` first.
    pub(crate) fn record_modulate(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        bb: &Backbone,
        bbw: &BoundParams,
        h: NodeId,
        target: NodeId,
    ) -> Result<(NodeId, NodeId), AdapterError> {
        let (gamma, beta, alpha) = self.record_mlp(g, p, h)?;
        let scale = g.add_scalar(beta, 1.0)?;
        let scaled = g.hadamard(scale, target)?;
        let input = g.add(gamma, scaled)?;
        let head = self.record_head(g, bb, bbw, input)?;
        let gate = g.add_scalar(alpha, 1.0)?;
        Ok((g.hadamard(gate, head)?, input))
    }

    fn record_head(&self, g: &mut Graph, bb: &Backbone, bbw: &BoundParams, input: NodeId) -> Result<NodeId, AdapterError> {
        bb.check_horizon(self.dims.horizon)?;
        let full = bb.head_on_graph(g, bbw, input)?;
        Ok(g.slice_cols(full, 0, self.dims.horizon)?)
    }

    /// Records the variant's forward pass. `covariates[i]` holds the
    /// aggregated embeddings of covariate `i` for the whole batch and
    /// `target` the `B × D_ts` target embeddings; backbone weights enter as
    /// constants.
    pub fn record_forward(
        &self,
        g: &mut Graph,
        p: &BoundParams,
        bb: &Backbone,
        covariates: &[NodeId],
        target: NodeId,
    ) -> Result<ForwardNodes, AdapterError> {
        if bb.d_model() != self.dims.d_ts {
            return Err(AdapterError::Dimension(format!(
                "backbone width {} does not match adapter width {}",
                bb.d_model(),
                self.dims.d_ts
            )));
        }
        let bbw = bb.bind_constants(g);
        if self.variant == Variant::WoCovariate {
            let input = g.add_row(target, p.id(SFT_BIAS)?)?;
            let forecast = self.record_head(g, bb, &bbw, input)?;
            return Ok(ForwardNodes { forecast, head_input: input, weights: None });
        }
        let mut aligned = Vec::with_capacity(covariates.len());
        for (i, &x) in covariates.iter().enumerate() {
            aligned.push(self.record_align(g, p, i, x)?);
        }
        let (h, weights) = self.record_mix(g, p, &aligned)?;
        if self.variant == Variant::WoAdaln {
            let cond = g.matmul(h, p.id(PROJ_W)?)?;
            let input = g.add(target, cond)?;
            let forecast = self.record_head(g, bb, &bbw, input)?;
            return Ok(ForwardNodes { forecast, head_input: input, weights: Some(weights) });
        }
        let (forecast, input) = self.record_modulate(g, p, bb, &bbw, h, target)?;
        Ok(ForwardNodes { forecast, head_input: input, weights: Some(weights) })
    }

    /// Forward pass on plain tensors, returning the `B × H` forecast and
    /// the `B × D_ts` head input.
    pub fn forward_batch(
        &self,
        bb: &Backbone,
        covariates: &[Tensor2],
        target: &Tensor2,
    ) -> Result<(Tensor2, Tensor2), AdapterError> {
        let mut g = Graph::new();
        let p = self.store.register_constant(&mut g);
        let xs: Vec<NodeId> = covariates.iter().map(|x| g.constant(x.clone())).collect();
        let t = g.constant(target.clone());
        let out = self.record_forward(&mut g, &p, bb, &xs, t)?;
        Ok((g.value(out.forecast).clone(), g.value(out.head_input).clone()))
    }

    /// Forward pass for one window's already extracted embeddings.
    pub fn forward_bundle(&self, bb: &Backbone, bundle: &EmbeddingBundle) -> Result<Vec<f64>, AdapterError> {
        let xs = bundle
            .covariates
            .iter()
            .map(|c| Tensor2::row_vector(c.vector.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        let covariates = if self.variant.uses_covariates() { xs } else { Vec::new() };
        if self.variant.uses_covariates() && covariates.len() != self.manifest.len() {
            return Err(AdapterError::Manifest(format!(
                "{} covariate embeddings for a manifest of {}",
                covariates.len(),
                self.manifest.len()
            )));
        }
        let target = Tensor2::row_vector(bundle.target.clone())?;
        Ok(self.forward_batch(bb, &covariates, &target)?.0.into_vec())
    }
}

/// Aligned covariate matrix `Ê` (`N × D`), rows in manifest order.
pub fn align_embeddings(params: &AdapterParams, bundle: &EmbeddingBundle) -> Result<Tensor2, AdapterError> {
    if bundle.len() != params.manifest.len() {
        return Err(AdapterError::Manifest(format!(
            "{} covariate embeddings for a manifest of {}",
            bundle.len(),
            params.manifest.len()
        )));
    }
    let mut g = Graph::new();
    let p = params.store.register_constant(&mut g);
    let mut rows = Vec::with_capacity(bundle.len());
    for (i, c) in bundle.covariates.iter().enumerate() {
        if c.name != params.manifest.entries[i].name {
            return Err(AdapterError::Manifest(format!(
                "covariate {i} is `{}`, manifest expects `{}`",
                c.name, params.manifest.entries[i].name
            )));
        }
        let x = g.constant(Tensor2::row_vector(c.vector.clone())?);
        let a = params.record_align(&mut g, &p, i, x)?;
        rows.push(g.value(a).clone());
    }
    Ok(Tensor2::vstack(&rows)?)
}

/// Gate-weighted mixture of the aligned rows.
pub fn gce_mix(params: &AdapterParams, aligned: &Tensor2) -> Result<ConditionVector, AdapterError> {
    if aligned.rows() != params.manifest.len() {
        return Err(AdapterError::Contract(format!(
            "{} aligned rows for a gate of length {}",
            aligned.rows(),
            params.manifest.len()
        )));
    }
    let mut g = Graph::new();
    let p = params.store.register_constant(&mut g);
    let rows: Vec<NodeId> = (0..aligned.rows())
        .map(|i| aligned.slice_rows(i, i + 1).map(|r| g.constant(r)))
        .collect::<Result<_, _>>()?;
    let (h, w) = params.record_mix(&mut g, &p, &rows)?;
    Ok(ConditionVector { h_cond: g.value(h).data().to_vec(), weights: g.value(w).data().to_vec() })
}

/// Modulated forecast of length `H` from a condition and a target embedding.
pub fn adaln_modulate(
    params: &AdapterParams,
    h_cond: &[f64],
    target: &[f64],
    bb: &Backbone,
) -> Result<Vec<f64>, AdapterError> {
    if !params.variant.uses_adaln() {
        return Err(AdapterError::Contract(format!("variant {} has no modulation MLP", params.variant)));
    }
    let mut g = Graph::new();
    let p = params.store.register_constant(&mut g);
    let bbw = bb.bind_constants(&mut g);
    let h = g.constant(Tensor2::row_vector(h_cond.to_vec())?);
    let t = g.constant(Tensor2::row_vector(target.to_vec())?);
    let (y, _) = params.record_modulate(&mut g, &p, bb, &bbw, h, t)?;
    Ok(g.value(y).data().to_vec())
}

/// End-to-end forward for one window: frozen extraction and aggregation,
/// alignment, gating, modulation and the frozen head.
pub fn cora_forward(
    params: &AdapterParams,
    bb: &Backbone,
    providers: &ProviderSet,
    window: &ForecastWindow,
) -> Result<Vec<f64>, AdapterError> {
    params.manifest.check_window(window)?;
    let bundle = embed_window(bb, providers, window)?;
    params.forward_bundle(bb, &bundle)
}
