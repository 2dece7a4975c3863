//! Named parameter storage with paired gradient buffers.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

#[derive(Debug, Clone)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Ordered map from parameter name to value and accumulated gradient.
///
/// Iteration order is insertion order, which fixes the update order of the
/// optimizer and the layout of checkpoints. A version counter is bumped on
/// every mutation of parameter values; forward caches record the version
/// they were computed against so that backward can reject stale caches.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
    version: u64,
}

impl<T: Scalar> ParamSet<T> {
    #[must_use]
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: HashMap::new(),
            version: 0,
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("parameter {name:?} already exists")));
        }
        let grad = Tensor::zeros(value.shape());
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
        });
        Ok(())
    }

    #[must_use]
    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].value)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    /// Mutable access to a parameter value. Bumps the version: any forward
    /// cache taken before this call becomes stale.
    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.version += 1;
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        Ok(&mut self.entries[i].value)
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor<T>> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].grad)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))
    }

    /// Mutable access to a gradient buffer. Does not bump the version:
    /// gradient accumulation does not invalidate forward caches.
    pub fn grad_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        let i = *self
            .index
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown parameter {name:?}")))?;
        Ok(&mut self.entries[i].grad)
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(T::ZERO);
        }
    }

    #[must_use]
    pub fn version(&self) -> u64 {
        self.version
    }

    #[must_use]
    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    /// Paired (value, grad) mutable views in insertion order, for the
    /// optimizer. Bumps the version.
    pub fn entries_mut(&mut self) -> &mut [ParamEntry<T>] {
        self.version += 1;
        &mut self.entries
    }

    #[must_use]
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    /// Flattens all parameter values into one `f64` vector, in insertion
    /// order. Used by finite-difference checks.
    #[must_use]
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for e in &self.entries {
            out.extend(e.value.data().iter().map(|v| v.to_f64()));
        }
        out
    }

    /// Inverse of [`ParamSet::flatten`]. Bumps the version.
    pub fn set_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_values() {
            return Err(Error::Validation(format!(
                "flat parameter vector has length {}, expected {}",
                flat.len(),
                self.num_values()
            )));
        }
        self.version += 1;
        let mut off = 0;
        for e in &mut self.entries {
            for v in e.value.data_mut() {
                *v = T::from_f64(flat[off]);
                off += 1;
            }
        }
        Ok(())
    }

    /// Flattens all gradients, aligned with [`ParamSet::flatten`].
    #[must_use]
    pub fn flatten_grads(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for e in &self.entries {
            out.extend(e.grad.data().iter().map(|v| v.to_f64()));
        }
        out
    }

    #[must_use]
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    grad: e.grad.cast(),
                })
                .collect(),
            index: self.index.clone(),
            version: self.version,
        }
    }
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}
