use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::tensor::Tensor;

/// Initial value of a parameter slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform {
        fan_in: usize,
    },
    Constant(f64),
}

/// Shape and role of one named parameter, as declared by a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamDecl {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
    /// `false` for running statistics and other buffers.
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Named parameters and buffers, ordered by name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
}

impl ParamStore {
    /// Draws every declared parameter. Each one gets its own stream derived
    /// from `seed` and its name, so two graphs that share a parameter name and
    /// shape start from identical values.
    pub fn initialize(decls: &[ParamDecl], seed: u64) -> Self {
        let mut store = Self::default();
        for d in decls {
            store.entries.insert(d.name.clone(), ParamEntry { tensor: draw(d, seed), trainable: d.trainable });
        }
        store
    }

    /// Keeps entries of `previous` whose name and shape still match `decls`
    /// and draws the rest.
    pub fn carry_over(decls: &[ParamDecl], previous: &ParamStore, seed: u64) -> Self {
        let mut store = Self::default();
        for d in decls {
            let tensor = match previous.get(&d.name) {
                Some(t) if t.shape() == d.shape.as_slice() => t.clone(),
                _ => draw(d, seed),
            };
            store.entries.insert(d.name.clone(), ParamEntry { tensor, trainable: d.trainable });
        }
        store
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.tensor)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name).ok_or_else(|| Error::Usage(format!("missing parameter {name}")))
    }

    pub fn is_trainable(&self, name: &str) -> bool {
        self.entries.get(name).is_some_and(|e| e.trainable)
    }

    pub fn set(&mut self, name: &str, tensor: Tensor) -> Result<()> {
        let entry = self.entries.get_mut(name).ok_or_else(|| Error::Usage(format!("missing parameter {name}")))?;
        if entry.tensor.shape() != tensor.shape() {
            return Err(Error::Dimension(format!(
                "parameter {name} has shape {:?}, replacement has {:?}",
                entry.tensor.shape(),
                tensor.shape()
            )));
        }
        entry.tensor = tensor.with_requires_grad(false);
        Ok(())
    }

    pub(crate) fn insert(&mut self, name: String, tensor: Tensor, trainable: bool) {
        self.entries.insert(name, ParamEntry { tensor, trainable });
    }

    pub(crate) fn data_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        self.entries.get_mut(name).map(|e| e.tensor.data_mut())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.entries.values().filter(|e| e.trainable).map(|e| e.tensor.numel()).sum()
    }
}

fn draw(d: &ParamDecl, seed: u64) -> Tensor {
    let numel: usize = d.shape.iter().product();
    let data = match d.init {
        Init::Constant(v) => vec![v; numel],
        Init::HeUniform { fan_in } => {
            let bound = (6.0 / fan_in.max(1) as f64).sqrt();
            let mut rng = rng_for(seed, &d.name);
            (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
        }
    };
    Tensor::new(&d.shape, data).expect("declared shapes are valid")
}
