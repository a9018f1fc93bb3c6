use indexmap::IndexMap;

use super::{Float, Tensor};
use crate::{Error, Result};

/// Named trainable tensors in insertion order, plus the seed they were
/// initialized from and the number of optimizer steps applied.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: IndexMap<String, Tensor>,
    seed: u64,
    step: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            tensors: IndexMap::new(),
            seed,
            step: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        self.tensors.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn zero_grad(&mut self) {
        self.tensors.values_mut().for_each(Tensor::zero_grad);
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Accumulate `delta` into the gradient of `name`.
    pub(crate) fn accumulate_grad(&mut self, name: &str, delta: &[Float]) -> Result<()> {
        let t = self.get_mut(name)?;
        let g = t.grad_mut();
        if g.len() != delta.len() {
            return Err(Error::Shape(format!(
                "gradient for '{name}' has {} values, parameter has {}",
                delta.len(),
                g.len()
            )));
        }
        g.iter_mut().zip(delta).for_each(|(a, b)| *a += *b);
        Ok(())
    }

    /// Move every tensor of `other` into this store.
    pub fn absorb(&mut self, other: ParamStore) -> Result<()> {
        for (k, v) in other.tensors {
            self.insert(k, v)?;
        }
        Ok(())
    }

    /// Split off the tensors whose name starts with `prefix`.
    pub fn split_prefix(&mut self, prefix: &str) -> ParamStore {
        let mut out = ParamStore::new(self.seed);
        out.step = self.step;
        let names: Vec<String> = self
            .tensors
            .keys()
            .filter(|k| k.starts_with(prefix))
            .cloned()
            .collect();
        for n in names {
            if let Some(t) = self.tensors.shift_remove(&n) {
                out.tensors.insert(n, t);
            }
        }
        out
    }
}
