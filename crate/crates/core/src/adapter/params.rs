use std::collections::BTreeMap;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::AdapterError;
use crate::backbone::{xavier, Backbone, ProviderSet, ProviderSpec};
use crate::datagen::{ForecastWindow, Modality};
use crate::numerics::{ParamStore, Tensor2};

/// The forward variants compared in the ablation table, in table order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    WoCovariate,
    WoAdaln,
    WoSelection,
    WoZeroInit,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Full, Variant::WoCovariate, Variant::WoAdaln, Variant::WoSelection, Variant::WoZeroInit];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::WoCovariate => "wo_covariate",
            Variant::WoAdaln => "wo_adaln",
            Variant::WoSelection => "wo_selection",
            Variant::WoZeroInit => "wo_zero_init",
        }
    }

    pub fn uses_covariates(self) -> bool {
        self != Variant::WoCovariate
    }

    pub fn uses_adaln(self) -> bool {
        matches!(self, Variant::Full | Variant::WoSelection | Variant::WoZeroInit)
    }

    pub fn learns_gate(self) -> bool {
        matches!(self, Variant::Full | Variant::WoAdaln | Variant::WoZeroInit)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = AdapterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| AdapterError::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// MLP output map zero, everything else as usual.
    #[default]
    ZeroInit,
    /// Output map Xavier as well.
    XavierInit,
    /// Every adapter parameter zero. All gradients vanish except the output
    /// bias; kept to demonstrate that pathology.
    StrictZero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdapterDims {
    /// Backbone embedding width.
    pub d_ts: usize,
    /// Unified hidden width of aligned covariates.
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub horizon: usize,
}

impl AdapterDims {
    /// `hidden = mlp_hidden = d_ts`.
    pub fn for_backbone(bb: &Backbone, horizon: usize) -> Self {
        let d = bb.d_model();
        AdapterDims { d_ts: d, hidden: d, mlp_hidden: d, horizon }
    }

    pub fn modulation_width(&self) -> usize {
        2 * self.d_ts + self.horizon
    }

    fn validate(&self) -> Result<(), AdapterError> {
        if self.d_ts == 0 || self.hidden == 0 || self.mlp_hidden == 0 || self.horizon == 0 {
            return Err(AdapterError::Config(format!("adapter dimensions must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub modality: Modality,
    /// Width of the aggregated embedding fed to the alignment map.
    pub dim: usize,
}

/// Covariates in forward order (ts, then txt, then img) with their embedding
/// widths and the provider specs needed to rebuild the foreign extractors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub providers: BTreeMap<Modality, ProviderSpec>,
}

impl CovariateManifest {
    pub fn from_window(window: &ForecastWindow, bb: &Backbone, providers: &ProviderSet) -> Result<Self, AdapterError> {
        let mut entries = Vec::with_capacity(window.covariates.len());
        let mut specs = BTreeMap::new();
        for c in &window.covariates {
            let dim = providers
                .dim(c.modality, bb)
                .ok_or_else(|| AdapterError::Manifest(format!("no provider for {} covariate `{}`", c.modality, c.name)))?;
            if let Some(p) = providers.get(c.modality) {
                specs.insert(c.modality, p.spec().clone());
            }
            entries.push(ManifestEntry { name: c.name.clone(), modality: c.modality, dim });
        }
        let m = CovariateManifest { entries, providers: specs };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.name.as_str()).collect()
    }

    /// Modalities present, in forward order.
    pub fn modalities(&self) -> Vec<Modality> {
        let mut ms: Vec<Modality> = self.entries.iter().map(|e| e.modality).collect();
        ms.dedup();
        ms
    }

    pub fn validate(&self) -> Result<(), AdapterError> {
        if self.entries.windows(2).any(|w| w[0].modality > w[1].modality) {
            return Err(AdapterError::Manifest("covariates must be ordered ts, txt, img".into()));
        }
        for m in self.modalities() {
            let dims: Vec<usize> = self.entries.iter().filter(|e| e.modality == m).map(|e| e.dim).collect();
            if dims.iter().any(|&d| d != dims[0] || d == 0) {
                return Err(AdapterError::Manifest(format!("{m} covariates must share one positive embedding width")));
            }
        }
        Ok(())
    }

    /// Checks that a window carries exactly the manifest's covariates, in order.
    pub fn check_window(&self, window: &ForecastWindow) -> Result<(), AdapterError> {
        let got: Vec<&str> = window.covariates.iter().map(|c| c.name.as_str()).collect();
        if got != self.names() {
            return Err(AdapterError::Manifest(format!(
                "window covariates {got:?} do not match manifest {:?}",
                self.names()
            )));
        }
        Ok(())
    }

    /// Rebuilds the foreign providers recorded in the manifest.
    pub fn provider_set(&self) -> Result<ProviderSet, AdapterError> {
        let build = |m| self.providers.get(&m).cloned().map(crate::backbone::ForeignProvider::new).transpose();
        Ok(ProviderSet { txt: build(Modality::Txt)?, img: build(Modality::Img)? })
    }
}

pub(crate) fn align_w(m: Modality) -> String {
    format!("align.{m}.w")
}

pub(crate) fn align_b(m: Modality) -> String {
    format!("align.{m}.b")
}

pub const GATE: &str = "gate";
pub const MLP_HIDDEN_W: &str = "mlp.hidden.w";
pub const MLP_HIDDEN_B: &str = "mlp.hidden.b";
pub const MLP_OUT_W: &str = "mlp.out.w";
pub const MLP_OUT_B: &str = "mlp.out.b";
pub const SFT_BIAS: &str = "sft.bias";
pub const PROJ_W: &str = "proj.w";

/// Trainable adapter state. The parameter set depends on the variant:
/// alignment maps and the gate for every covariate-using variant, the
/// modulation MLP for the adaLN variants, a projection for `wo_adaln` and a
/// single embedding bias for `wo_covariate`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterParams {
    pub(crate) dims: AdapterDims,
    pub(crate) manifest: CovariateManifest,
    pub(crate) variant: Variant,
    pub(crate) init_mode: InitMode,
    pub(crate) store: ParamStore,
}

impl AdapterParams {
    pub fn init(
        dims: &AdapterDims,
        manifest: &CovariateManifest,
        variant: Variant,
        mode: InitMode,
        seed: u64,
    ) -> Result<Self, AdapterError> {
        dims.validate()?;
        manifest.validate()?;
        if variant.uses_covariates() && manifest.is_empty() {
            return Err(AdapterError::Manifest(format!("variant {variant} needs at least one covariate")));
        }
        let mode = if variant == Variant::WoZeroInit { InitMode::XavierInit } else { mode };
        let strict = mode == InitMode::StrictZero;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut mat = |r, c, zero: bool| if zero { Tensor2::zeros(r, c) } else { xavier(r, c, &mut rng) };
        let d = dims.hidden;
        let mut store = ParamStore::new();
        if variant.uses_covariates() {
            for m in manifest.modalities() {
                let dm = manifest.entries.iter().find(|e| e.modality == m).map(|e| e.dim).unwrap_or(0);
                store.insert(align_w(m), mat(dm, d, strict));
                store.insert(align_b(m), Tensor2::zeros(1, d));
            }
            store.insert(GATE, Tensor2::zeros(1, manifest.len()));
        }
        match variant {
            Variant::WoCovariate => store.insert(SFT_BIAS, Tensor2::zeros(1, dims.d_ts)),
            Variant::WoAdaln => store.insert(PROJ_W, Tensor2::zeros(d, dims.d_ts)),
            _ => {
                store.insert(MLP_HIDDEN_W, mat(d, dims.mlp_hidden, strict));
                store.insert(MLP_HIDDEN_B, Tensor2::zeros(1, dims.mlp_hidden));
                store.insert(MLP_OUT_W, mat(dims.mlp_hidden, dims.modulation_width(), mode != InitMode::XavierInit));
                store.insert(MLP_OUT_B, Tensor2::zeros(1, dims.modulation_width()));
            }
        }
        Ok(AdapterParams { dims: dims.clone(), manifest: manifest.clone(), variant, init_mode: mode, store })
    }

    pub fn dims(&self) -> &AdapterDims {
        &self.dims
    }

    pub fn manifest(&self) -> &CovariateManifest {
        &self.manifest
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Mutable access for optimizers and tests. Shapes must be preserved.
    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2, AdapterError> {
        self.store.get(name).ok_or_else(|| AdapterError::Contract(format!("variant {} has no parameter `{name}`", self.variant)))
    }

    /// Softmax of the gate for gated variants, `1/N` for `wo_selection`,
    /// empty for `wo_covariate`.
    pub fn gate_weights(&self) -> Result<Vec<f64>, AdapterError> {
        let n = self.manifest.len();
        Ok(match self.variant {
            Variant::WoCovariate => Vec::new(),
            Variant::WoSelection => vec![1.0 / n as f64; n],
            _ => crate::numerics::softmax(self.get(GATE)?.data())?,
        })
    }

    /// Index of the largest gate weight; the lowest index wins ties.
    pub fn gate_argmax(&self) -> Result<Option<usize>, AdapterError> {
        let w = self.gate_weights()?;
        Ok(w.iter().enumerate().fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
        .map(|(i, _)| i))
    }

    pub fn hash(&self) -> String {
        crate::backbone::hash_params(&self.store)
    }
}

/// Full-variant parameters in the given init mode.
pub fn init_adapter(
    dims: &AdapterDims,
    manifest: &CovariateManifest,
    mode: InitMode,
    seed: u64,
) -> Result<AdapterParams, AdapterError> {
    AdapterParams::init(dims, manifest, Variant::Full, mode, seed)
}
