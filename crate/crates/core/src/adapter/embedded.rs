use rayon::prelude::*;

use super::{AdapterError, CovariateManifest};
use crate::backbone::{embed_window, Backbone, ProviderSet};
use crate::datagen::{ForecastWindow, NormRecord};
use crate::numerics::Tensor2;

/// Frozen-side inputs of a window set, extracted once: one `W × D_i` matrix
/// per covariate, `W × D_ts` target embeddings and `W × H` normalized truth.
/// Adapter training never needs the backbone trunk again.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedSet {
    pub covariates: Vec<Tensor2>,
    pub target: Tensor2,
    pub truth: Tensor2,
    pub norms: Vec<NormRecord>,
}

impl EmbeddedSet {
    pub fn build(
        bb: &Backbone,
        providers: &ProviderSet,
        manifest: &CovariateManifest,
        windows: &[ForecastWindow],
        horizon: usize,
    ) -> Result<Self, AdapterError> {
        if windows.is_empty() {
            return Err(AdapterError::Contract("cannot embed an empty window set".into()));
        }
        let bundles = windows
            .par_iter()
            .map(|w| {
                manifest.check_window(w)?;
                if w.horizon() < horizon {
                    return Err(AdapterError::Contract(format!("window horizon {} shorter than {horizon}", w.horizon())));
                }
                Ok(embed_window(bb, providers, w)?)
            })
            .collect::<Result<Vec<_>, AdapterError>>()?;
        let n = windows.len();
        let covariates = (0..manifest.len())
            .map(|i| {
                let dim = manifest.entries[i].dim;
                let mut data = Vec::with_capacity(n * dim);
                for b in &bundles {
                    if b.covariates[i].vector.len() != dim {
                        return Err(AdapterError::Dimension(format!(
                            "covariate `{}` has embedding width {}, expected {dim}",
                            manifest.entries[i].name,
                            b.covariates[i].vector.len()
                        )));
                    }
                    data.extend_from_slice(&b.covariates[i].vector);
                }
                Ok(Tensor2::from_vec(n, dim, data)?)
            })
            .collect::<Result<Vec<_>, AdapterError>>()?;
        let d = bb.d_model();
        let target = Tensor2::from_vec(n, d, bundles.iter().flat_map(|b| b.target.iter().copied()).collect())?;
        let truth =
            Tensor2::from_vec(n, horizon, windows.iter().flat_map(|w| w.horizon_truth[..horizon].iter().copied()).collect())?;
        Ok(EmbeddedSet { covariates, target, truth, norms: windows.iter().map(|w| w.norm).collect() })
    }

    pub fn len(&self) -> usize {
        self.target.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn horizon(&self) -> usize {
        self.truth.cols()
    }

    /// Rows `idx` of every matrix, in the given order.
    pub fn select(&self, idx: &[usize]) -> EmbeddedSet {
        let pick = |t: &Tensor2| {
            let mut data = Vec::with_capacity(idx.len() * t.cols());
            for &i in idx {
                data.extend_from_slice(t.row(i));
            }
            Tensor2::from_vec(idx.len(), t.cols(), data).expect("rows of a finite tensor")
        };
        EmbeddedSet {
            covariates: self.covariates.iter().map(pick).collect(),
            target: pick(&self.target),
            truth: pick(&self.truth),
            norms: idx.iter().map(|&i| self.norms[i]).collect(),
        }
    }
}
