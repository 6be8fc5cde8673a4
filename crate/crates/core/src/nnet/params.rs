use std::collections::{BTreeMap, HashMap};

use crate::autodiff::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter tensors, ordered by name.
///
/// Names are dotted paths such as `encoder.layers.0.ffn.fc1.weight`; an
/// integrated model prefixes them with `s2p.` / `p2t.`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<T> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) -> Option<Tensor<T>> {
        self.tensors.insert(name.into(), t)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<T>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<T>> {
        self.tensors.remove(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Copy with `prefix` prepended to every name.
    pub fn prefixed(&self, prefix: &str) -> ParamStore<T> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (format!("{prefix}{k}"), v.clone()))
                .collect(),
        }
    }

    /// Entries under `prefix`, with the prefix removed.
    pub fn strip_prefix(&self, prefix: &str) -> ParamStore<T> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamStore<T>) {
        self.tensors.extend(other.tensors);
    }

    pub fn sq_norm(&self) -> f64 {
        self.tensors.values().map(Tensor::sq_norm).sum()
    }
}

/// Parameters placed on a graph for one forward pass.
pub struct Bound {
    vars: HashMap<String, Var>,
}

impl Bound {
    /// Places every tensor on `g`; names for which `frozen` returns true are
    /// bound as constants and receive no gradient.
    pub fn new<T: Scalar>(
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        frozen: &dyn Fn(&str) -> bool,
    ) -> Self {
        let vars = store
            .iter()
            .map(|(name, t)| {
                let v = if frozen(name) {
                    g.constant(t.clone())
                } else {
                    g.param(t.clone())
                };
                (name.to_string(), v)
            })
            .collect();
        Bound { vars }
    }

    pub fn all<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>) -> Self {
        Self::new(g, store, &|_| false)
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingParam(name.to_string()))
    }

    pub fn view(&self, prefix: &str) -> ParamView<'_> {
        ParamView {
            bound: self,
            prefix: prefix.to_string(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Collects gradients of every bound parameter after `g.backward`.
    pub fn gradients<T: Scalar>(&self, g: &Graph<T>) -> ParamStore<T> {
        let mut out = ParamStore::new();
        for (name, &v) in &self.vars {
            if g.requires_grad(v) {
                out.insert(name.clone(), g.grad_tensor(v));
            }
        }
        out
    }
}

/// Name-scoped access into a [`Bound`].
#[derive(Clone)]
pub struct ParamView<'a> {
    bound: &'a Bound,
    prefix: String,
}

impl<'a> ParamView<'a> {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.bound.get(&format!("{}{name}", self.prefix))
    }

    pub fn sub(&self, name: &str) -> ParamView<'a> {
        ParamView {
            bound: self.bound,
            prefix: format!("{}{name}.", self.prefix),
        }
    }
}
