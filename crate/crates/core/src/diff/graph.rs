use alloc::collections::BTreeMap;
use core::ops::{Deref, DerefMut};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// A tape bound to a frozen parameter store for one forward pass.
///
/// Each parameter is recorded once, so weights reused across recurrent
/// blocks accumulate a single gradient.
pub struct Graph<'p, T> {
    tape: Tape<T>,
    params: &'p ParamStore<T>,
    bound: BTreeMap<usize, Var>,
}

impl<'p, T: Real> Graph<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Graph {
            tape: Tape::new(),
            params,
            bound: BTreeMap::new(),
        }
    }

    /// Looks up a parameter by name.
    pub fn p(&mut self, name: &str) -> Result<Var> {
        let idx = self
            .params
            .position(name)
            .ok_or_else(|| Error::UnknownParam(name.into()))?;
        if let Some(&v) = self.bound.get(&idx) {
            return Ok(v);
        }
        let v = self.tape.param_leaf(idx, self.params.value(idx).clone());
        self.bound.insert(idx, v);
        Ok(v)
    }

    pub fn params(&self) -> &'p ParamStore<T> {
        self.params
    }

    pub fn into_tape(self) -> Tape<T> {
        self.tape
    }
}

impl<T> Deref for Graph<'_, T> {
    type Target = Tape<T>;
    fn deref(&self) -> &Tape<T> {
        &self.tape
    }
}

impl<T> DerefMut for Graph<'_, T> {
    fn deref_mut(&mut self) -> &mut Tape<T> {
        &mut self.tape
    }
}
