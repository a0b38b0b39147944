use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tape::{Gradients, Real, Tape, Var};

/// Named 2-D tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<F> {
    tensors: BTreeMap<String, Array2<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<F>) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Array2<F>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<F>> {
        self.tensors.get_mut(name)
    }

    /// Tensor lookup for names the model itself created.
    pub fn expect(&self, name: &str) -> &Array2<F> {
        self.tensors
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} missing"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array2<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Array2<F>)> {
        self.tensors.iter_mut()
    }

    /// Keeps only tensors whose name satisfies `keep`.
    pub fn retain(&mut self, keep: impl Fn(&str) -> bool) {
        self.tensors.retain(|k, _| keep(k));
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.mapv(|x| G::from_f64c(x.to_f64().unwrap()))))
                .collect(),
        }
    }

    /// Binds every tensor whose name passes `trainable` as a parameter and
    /// the rest as constants.
    pub fn bind(&self, tape: &mut Tape<F>, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let var = if trainable(k) {
                    tape.param(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        Bound { vars }
    }

    /// Copies the gradient of every bound tensor out of `grads`.
    pub fn collect_grads(&self, bound: &Bound, grads: &Gradients<F>) -> ParamStore<F> {
        let mut out = ParamStore::new();
        for (name, t) in &self.tensors {
            if let Some(var) = bound.vars.get(name) {
                out.insert(name.clone(), grads.get_or_zeros(*var, t.dim()));
            }
        }
        out
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not bound"))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }
}

/// Glorot-normal initialization.
pub fn glorot<R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> Array2<f32> {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_fn((fan_in, fan_out), |_| normal.sample(rng) as f32)
}
