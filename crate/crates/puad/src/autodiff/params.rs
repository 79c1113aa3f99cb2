//! Named trainable tensors and their flat text serialization.

use std::collections::HashMap;

use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Ordered collection of uniquely named tensors. Insertion order is the
/// layer order and drives optimizer-state alignment and serialization.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn new() -> Self {
        ParameterSet::default()
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        if self.entries.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!(
                "duplicate parameter name {name:?}"
            )));
        }
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar coordinates across all parameters.
    pub fn n_coords(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Insert every parameter as a leaf of `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let mut ids = Vec::with_capacity(self.entries.len());
        let mut index = HashMap::with_capacity(self.entries.len());
        for (i, (name, tensor)) in self.entries.iter().enumerate() {
            ids.push(g.leaf(tensor.clone()));
            index.insert(name.clone(), i);
        }
        BoundParams { ids, index }
    }

    /// One parameter per line: `name d0,d1 v0 v1 ...`, values printed
    /// with 17 significant digits so the round trip is exact.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, tensor) in &self.entries {
            out.push_str(name);
            out.push(' ');
            let dims: Vec<String> = tensor.shape().iter().map(|d| d.to_string()).collect();
            out.push_str(&dims.join(","));
            for v in tensor.data() {
                out.push(' ');
                out.push_str(&format!("{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut set = ParameterSet::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let name = parts
                .next()
                .ok_or_else(|| Error::Format(format!("line {}: missing name", lineno + 1)))?;
            let shape_tok = parts
                .next()
                .ok_or_else(|| Error::Format(format!("line {}: missing shape", lineno + 1)))?;
            let shape: Vec<usize> = shape_tok
                .split(',')
                .map(|d| {
                    d.parse::<usize>().map_err(|_| {
                        Error::Format(format!("line {}: bad dimension {d:?}", lineno + 1))
                    })
                })
                .collect::<Result<_>>()?;
            let data: Vec<f64> = parts
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Format(format!("line {}: bad value {v:?}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            let tensor = Tensor::new(shape, data)
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))?;
            set.insert(name, tensor)?;
        }
        Ok(set)
    }
}

/// Graph leaves for one `ParameterSet`, aligned with its entry order.
pub struct BoundParams {
    ids: Vec<NodeId>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids[*self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name:?}"))]
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    /// Gradients in parameter order, zeros where backward never reached.
    pub fn gradients(&self, g: &Graph) -> Vec<Tensor> {
        self.ids.iter().map(|&id| g.grad_or_zeros(id)).collect()
    }
}
