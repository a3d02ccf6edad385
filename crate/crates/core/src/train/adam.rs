use alloc::vec::Vec;

use crate::diff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
            clip: None,
        }
    }
}

/// Adam with bias correction folded into the step size:
/// `θ ← θ − lr·√(1−β2ᵗ)/(1−β1ᵗ) · m / (√v + ε)`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    /// Applies one update from the gradients currently held by `params`.
    pub fn step(&mut self, params: &mut ParamStore<T>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, v)| Tensor::zeros(v.shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::invalid("adam", "parameter count changed between steps"));
        }
        if let Some(c) = self.cfg.clip {
            let n = params.grad_norm().f64();
            if n > c {
                params.scale_grads(T::of(c / n));
            }
        }
        self.t += 1;
        let t = self.t as f64;
        let c = &self.cfg;
        let step = c.lr * libm::sqrt(1.0 - libm::pow(c.beta2, t)) / (1.0 - libm::pow(c.beta1, t));
        let (b1, b2, eps, step) = (T::of(c.beta1), T::of(c.beta2), T::of(c.eps), T::of(step));
        let one = T::one();
        for (i, (value, grad)) in params.values_and_grads_mut().enumerate() {
            if self.m[i].shape() != value.shape() {
                return Err(Error::shape("adam", self.m[i].shape(), value.shape()));
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((p, &gr), mi), vi) in value.data_mut().iter_mut().zip(grad.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (one - b1) * gr;
                *vi = b2 * *vi + (one - b2) * gr * gr;
                *p -= step * *mi / (vi.sqrt() + eps);
            }
        }
        Ok(())
    }
}
