use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// How a parameter is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `[-bound, bound]`.
    Uniform(f64),
    Zeros,
    Ones,
    /// Final projection of a residual branch: zero when the store is built
    /// with `zero_tails`, otherwise uniform in `[-bound, bound]`.
    Tail(f64),
}

impl Init {
    /// Fan-in scaled uniform init for a layer with `fan_in` inputs.
    pub fn fan_in(fan_in: usize) -> Self {
        Init::Uniform(1.0 / libm::sqrt(fan_in.max(1) as f64))
    }

    pub fn tail(fan_in: usize) -> Self {
        Init::Tail(1.0 / libm::sqrt(fan_in.max(1) as f64))
    }
}

/// Declared learnable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, shape: &[usize], init: Init) -> Self {
        ParamSpec {
            name: name.into(),
            shape: shape.to_vec(),
            init,
        }
    }

    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Named, insertion-ordered learnable tensors with a parallel gradient set.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    index: BTreeMap<String, usize>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            index: BTreeMap::new(),
        }
    }

    /// Allocates and initialises every spec from a seeded stream.
    ///
    /// Specs sharing a name (parameters reused across recurrent blocks) are
    /// allocated once.
    pub fn from_specs(specs: &[ParamSpec], seed: u64, zero_tails: bool) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for spec in specs {
            if let Some(&i) = store.index.get(&spec.name) {
                if store.values[i].shape() != spec.shape.as_slice() {
                    return Err(Error::DuplicateParam(spec.name.clone()));
                }
                continue;
            }
            let t = match spec.init {
                Init::Zeros => Tensor::zeros(&spec.shape),
                Init::Ones => Tensor::full(&spec.shape, T::one()),
                Init::Tail(_) if zero_tails => Tensor::zeros(&spec.shape),
                Init::Uniform(b) | Init::Tail(b) => {
                    Tensor::from_fn(&spec.shape, |_| T::of(rng.random_range(-b..=b)))
                }
            };
            store.insert(spec.name.clone(), t)?;
        }
        Ok(store)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.values.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.position(name).map(move |i| &mut self.values[i])
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.grads[i])
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn value(&self, i: usize) -> &Tensor<T> {
        &self.values[i]
    }

    pub fn value_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.values[i]
    }

    pub fn grad_at(&self, i: usize) -> &Tensor<T> {
        &self.grads[i]
    }

    pub(crate) fn grad_at_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.grads[i]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    /// Values and gradients side by side, for optimisers.
    pub fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.values.iter_mut().zip(&self.grads)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x = T::zero());
        }
    }

    pub fn grad_norm(&self) -> T {
        self.grads.iter().map(Tensor::sq_norm).sum::<T>().sqrt()
    }

    pub fn scale_grads(&mut self, factor: T) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}
