use indexmap::IndexMap;

use super::{Element, Tensor};
use crate::error::{Error, Result};

/// True when `path` equals `prefix` or lies beneath it on a `.` boundary,
/// so `encoder.block1` matches `encoder.block1.attn.wq` but not
/// `encoder.block10.attn.wq`.
pub fn prefix_matches(path: &str, prefix: &str) -> bool {
    prefix.is_empty()
        || path == prefix
        || (path.len() > prefix.len()
            && path.starts_with(prefix)
            && path.as_bytes()[prefix.len()] == b'.')
}

/// Ordered map from dotted parameter path to tensor.
///
/// Iteration order is insertion order.
#[derive(Clone, Debug, Default)]
pub struct NamedParamStore<T: Element> {
    entries: IndexMap<String, Tensor<T>>,
}

impl<T: Element> NamedParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, path: impl Into<String>, tensor: Tensor<T>) -> Result<()> {
        let path = path.into();
        if self.entries.contains_key(&path) {
            return Err(Error::DuplicateParam(path));
        }
        self.entries.insert(path, tensor);
        Ok(())
    }

    /// Replaces the tensor under an existing path, keeping its position.
    pub fn replace(&mut self, path: &str, tensor: Tensor<T>) -> Result<()> {
        match self.entries.get_mut(path) {
            Some(slot) => {
                if slot.shape() != tensor.shape() {
                    return Err(Error::shape("replace", slot.shape(), tensor.shape()));
                }
                *slot = tensor;
                Ok(())
            }
            None => Err(Error::UnknownParam(path.to_string())),
        }
    }

    pub fn get(&self, path: &str) -> Result<&Tensor<T>> {
        self.entries
            .get(path)
            .ok_or_else(|| Error::UnknownParam(path.to_string()))
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn paths(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Paths matched by any of the prefixes, in store order.
    pub fn matching(&self, prefixes: &[String]) -> Result<Vec<&str>> {
        for p in prefixes {
            if !self.paths().any(|path| prefix_matches(path, p)) {
                return Err(Error::NoMatchingParam(p.clone()));
            }
        }
        Ok(self
            .paths()
            .filter(|path| prefixes.iter().any(|p| prefix_matches(path, p)))
            .collect())
    }

    /// Sub-store of every entry under `prefix`, sharing the same tensors.
    pub fn subset(&self, prefix: &str) -> NamedParamStore<T> {
        NamedParamStore {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| prefix_matches(k, prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Appends all entries from `other`. Paths must not collide.
    pub fn extend(&mut self, other: NamedParamStore<T>) -> Result<()> {
        for (k, v) in other.entries {
            self.insert(k, v)?;
        }
        Ok(())
    }

    pub fn remove_prefix(&mut self, prefix: &str) {
        self.entries.retain(|k, _| !prefix_matches(k, prefix));
    }

    pub fn zero_grad(&self) {
        for t in self.entries.values() {
            t.zero_grad();
        }
    }

    /// Deep copy with fresh leaves; gradients are not carried over.
    pub fn fresh_copy(&self, requires_grad: bool) -> NamedParamStore<T> {
        NamedParamStore {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.to_leaf(requires_grad)))
                .collect(),
        }
    }

    /// Concatenation of the gradients of every parameter matched by
    /// `prefixes`, in store order.
    pub fn flatten_grads(&self, prefixes: &[String]) -> Result<Vec<T>> {
        let mut out = Vec::new();
        for path in self.matching(prefixes)? {
            let t = &self.entries[path];
            let g = t
                .grad_vec()
                .ok_or_else(|| Error::MissingGrad(path.to_string()))?;
            out.extend_from_slice(&g);
        }
        Ok(out)
    }

    /// [`flatten_grads`](Self::flatten_grads) as a rank-1 tensor.
    pub fn flatten_grads_tensor(&self, prefixes: &[String]) -> Result<Tensor<T>> {
        let g = self.flatten_grads(prefixes)?;
        let n = g.len();
        Tensor::from_vec(&[n], g)
    }

    /// Snapshot of every accumulated gradient, keyed by path.
    pub fn grads(&self) -> Result<IndexMap<String, Vec<T>>> {
        self.entries
            .iter()
            .filter(|(_, t)| t.requires_grad())
            .map(|(k, t)| {
                t.grad_vec()
                    .map(|g| (k.clone(), g))
                    .ok_or_else(|| Error::MissingGrad(k.clone()))
            })
            .collect()
    }

    /// Checks that two stores hold exactly the same set of paths.
    pub fn check_same_paths(&self, other: &NamedParamStore<T>) -> Result<()> {
        let missing: Vec<String> = self
            .paths()
            .filter(|p| !other.contains(p))
            .map(str::to_string)
            .collect();
        let unexpected: Vec<String> = other
            .paths()
            .filter(|p| !self.contains(p))
            .map(str::to_string)
            .collect();
        if missing.is_empty() && unexpected.is_empty() {
            Ok(())
        } else {
            Err(Error::PathMismatch {
                missing,
                unexpected,
            })
        }
    }

    /// Bitwise equality of paths, shapes and values.
    pub fn bitwise_eq(&self, other: &NamedParamStore<T>) -> bool {
        self.len() == other.len()
            && self.entries.iter().zip(other.entries.iter()).all(|((ka, a), (kb, b))| {
                ka == kb
                    && a.shape() == b.shape()
                    && a.data()
                        .iter()
                        .zip(b.data())
                        .all(|(x, y)| x.to_bits_u64() == y.to_bits_u64())
            })
    }
}

trait Bits {
    fn to_bits_u64(self) -> u64;
}

impl<T: Element> Bits for T {
    fn to_bits_u64(self) -> u64 {
        // f32 → f64 widening is exact and injective
        self.as_f64().to_bits()
    }
}
