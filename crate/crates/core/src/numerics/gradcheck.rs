//! Central finite-difference gradient oracle.

use super::{Graph, NodeId, NumericsError, Tensor2};

/// A scalar function of a list of parameter tensors with an analytic gradient.
pub trait Objective {
    fn value(&self, params: &[Tensor2]) -> Result<f64, NumericsError>;
    fn gradient(&self, params: &[Tensor2]) -> Result<Vec<Tensor2>, NumericsError>;
}

/// Objective defined by a closure that records a scalar loss on a fresh graph,
/// given the parameter leaves. Gradients come from [`Graph::backward`].
pub struct GraphObjective<F> {
    build: F,
}

impl<F> GraphObjective<F>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    pub fn new(build: F) -> Self {
        Self { build }
    }

    fn record(&self, params: &[Tensor2]) -> Result<(Graph, Vec<NodeId>, NodeId), NumericsError> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = params.iter().map(|p| g.param(p.clone())).collect();
        let root = (self.build)(&mut g, &ids)?;
        Ok((g, ids, root))
    }
}

impl<F> Objective for GraphObjective<F>
where
    F: Fn(&mut Graph, &[NodeId]) -> Result<NodeId, NumericsError>,
{
    fn value(&self, params: &[Tensor2]) -> Result<f64, NumericsError> {
        let (g, _, root) = self.record(params)?;
        Ok(g.value(root).get(0, 0))
    }

    fn gradient(&self, params: &[Tensor2]) -> Result<Vec<Tensor2>, NumericsError> {
        let (g, ids, root) = self.record(params)?;
        let grads = g.backward(root)?;
        Ok(ids.iter().zip(params).map(|(id, p)| grads.get_or_zeros(*id, p)).collect())
    }
}

/// Compares the analytic gradient against central differences and returns
/// the maximum relative error, with denominator `max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check(obj: &impl Objective, theta: &[Tensor2], h: f64) -> Result<f64, NumericsError> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(NumericsError::Contract(format!("grad_check step {h} outside [1e-6, 1e-3]")));
    }
    let analytic = obj.gradient(theta)?;
    let mut probe: Vec<Tensor2> = theta.to_vec();
    let mut worst = 0.0f64;
    for (pi, p) in theta.iter().enumerate() {
        for k in 0..p.len() {
            let orig = p.data()[k];
            probe[pi].data_mut()[k] = orig + h;
            let plus = obj.value(&probe)?;
            probe[pi].data_mut()[k] = orig - h;
            let minus = obj.value(&probe)?;
            probe[pi].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(NumericsError::NonFinite(format!(
                    "objective not finite when probing parameter {pi} entry {k}"
                )));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[k];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
