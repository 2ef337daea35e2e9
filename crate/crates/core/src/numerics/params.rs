use serde::{Deserialize, Serialize};

use super::{Graph, NodeId, NumericsError, Tensor2};

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: Vec<(String, Tensor2)>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor2) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some((_, v)) => *v = value,
            None => self.entries.push((name, value)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor2> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor2> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor2)> {
        self.entries.iter().map(|(n, v)| (n.as_str(), v))
    }

    pub fn tensors(&self) -> Vec<&Tensor2> {
        self.entries.iter().map(|(_, v)| v).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor2> {
        self.entries.iter_mut().map(|(_, v)| v).collect()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, v)| v.len()).sum()
    }

    /// Registers every tensor as a parameter leaf, in store order.
    pub fn register(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            ids: self.entries.iter().map(|(n, v)| (n.clone(), g.param(v.clone()))).collect(),
        }
    }

    /// Pairs already created leaves (one per entry, in store order) with the
    /// entry names.
    pub fn bind(&self, ids: &[NodeId]) -> Result<BoundParams, NumericsError> {
        if ids.len() != self.entries.len() {
            return Err(NumericsError::Contract(format!("{} leaves for {} parameters", ids.len(), self.entries.len())));
        }
        Ok(BoundParams { ids: self.entries.iter().map(|(n, _)| n.clone()).zip(ids.iter().copied()).collect() })
    }

    /// Registers every tensor as a constant leaf.
    pub fn register_constant(&self, g: &mut Graph) -> BoundParams {
        BoundParams {
            ids: self.entries.iter().map(|(n, v)| (n.clone(), g.constant(v.clone()))).collect(),
        }
    }
}

/// Node ids of a [`ParamStore`] registered on one graph.
#[derive(Clone, Debug)]
pub struct BoundParams {
    ids: Vec<(String, NodeId)>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<NodeId, NumericsError> {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| NumericsError::Contract(format!("parameter `{name}` is not registered")))
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.ids.iter().map(|(_, id)| *id)
    }
}
