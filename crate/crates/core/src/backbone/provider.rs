use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BackboneError;
use crate::numerics::{Graph, Tensor2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderSpec {
    pub input_width: usize,
    pub dim: usize,
    pub seed: u64,
}

/// Stand-in for a frozen text or image encoder: a fixed random affine map
/// followed by `tanh`. Never trained.
#[derive(Clone, Debug, PartialEq)]
pub struct ForeignProvider {
    spec: ProviderSpec,
    weight: Tensor2,
    bias: Tensor2,
}

impl ForeignProvider {
    pub fn new(spec: ProviderSpec) -> Result<Self, BackboneError> {
        if spec.input_width == 0 || spec.dim == 0 {
            return Err(BackboneError::Config("provider widths must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let w_dist = Normal::new(0.0, 1.0 / (spec.input_width as f64).sqrt()).expect("valid normal");
        let b_dist = Normal::new(0.0, 0.5).expect("valid normal");
        let weight = Tensor2::from_vec(
            spec.input_width,
            spec.dim,
            (0..spec.input_width * spec.dim).map(|_| w_dist.sample(&mut rng)).collect(),
        )?;
        let bias = Tensor2::row_vector((0..spec.dim).map(|_| b_dist.sample(&mut rng)).collect())?;
        Ok(Self { spec, weight, bias })
    }

    pub fn spec(&self) -> &ProviderSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// Per-step embeddings (`steps × dim`) of a step-major `steps × width` slice.
    pub fn embed(&self, values: &[f64], width: usize) -> Result<Tensor2, BackboneError> {
        if width != self.spec.input_width {
            return Err(BackboneError::Schema(format!(
                "channel width {width} does not match provider input width {}",
                self.spec.input_width
            )));
        }
        if values.len() % width != 0 {
            return Err(BackboneError::Input(format!("{} values do not form rows of width {width}", values.len())));
        }
        let x = Tensor2::from_vec(values.len() / width, width, values.to_vec())?;
        let mut g = Graph::new();
        let xi = g.constant(x);
        let w = g.constant(self.weight.clone());
        let b = g.constant(self.bias.clone());
        let z = g.matmul(xi, w)?;
        let z = g.add_row(z, b)?;
        let y = g.tanh(z)?;
        Ok(g.value(y).clone())
    }
}
