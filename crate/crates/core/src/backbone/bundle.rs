use super::{aggregate_embedding, Backbone, BackboneError, ForeignProvider};
use crate::datagen::{ForecastWindow, Modality};

#[derive(Clone, Debug, PartialEq)]
pub struct CovariateEmbedding {
    pub name: String,
    pub modality: Modality,
    pub vector: Vec<f64>,
}

/// Aggregated covariate embeddings (manifest order) and the target embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBundle {
    pub covariates: Vec<CovariateEmbedding>,
    pub target: Vec<f64>,
}

impl EmbeddingBundle {
    /// Number of covariates per modality: (ts, txt, img).
    pub fn counts(&self) -> (usize, usize, usize) {
        let n = |m| self.covariates.iter().filter(|c| c.modality == m).count();
        (n(Modality::Ts), n(Modality::Txt), n(Modality::Img))
    }

    pub fn len(&self) -> usize {
        self.covariates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.covariates.is_empty()
    }
}

/// One frozen extractor per foreign modality.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProviderSet {
    pub txt: Option<ForeignProvider>,
    pub img: Option<ForeignProvider>,
}

impl ProviderSet {
    pub fn get(&self, m: Modality) -> Option<&ForeignProvider> {
        match m {
            Modality::Ts => None,
            Modality::Txt => self.txt.as_ref(),
            Modality::Img => self.img.as_ref(),
        }
    }

    /// Embedding width a covariate of modality `m` will have.
    pub fn dim(&self, m: Modality, backbone: &Backbone) -> Option<usize> {
        match m {
            Modality::Ts => Some(backbone.d_model()),
            _ => self.get(m).map(ForeignProvider::dim),
        }
    }
}

/// Extraction and aggregation for one window: per-step embeddings from the
/// backbone (ts) or the modality provider (txt/img), last-step or mean
/// aggregation, and the last-step target embedding.
pub fn embed_window(
    backbone: &Backbone,
    providers: &ProviderSet,
    window: &ForecastWindow,
) -> Result<EmbeddingBundle, BackboneError> {
    let mut covariates = Vec::with_capacity(window.covariates.len());
    for c in &window.covariates {
        let steps = match c.modality {
            Modality::Ts => backbone.extract_ts_embeddings(&c.values)?,
            m => providers
                .get(m)
                .ok_or_else(|| BackboneError::Schema(format!("no provider for {m} covariate `{}`", c.name)))?
                .embed(&c.values, c.width)?,
        };
        covariates.push(CovariateEmbedding {
            name: c.name.clone(),
            modality: c.modality,
            vector: aggregate_embedding(&steps, c.modality)?,
        });
    }
    Ok(EmbeddingBundle { covariates, target: backbone.extract_target_embedding(&window.lookback)? })
}
