//! k-space recovery network with a global residual.

use alloc::vec::Vec;

use super::config::ModelConfig;
use super::inet::Cb5;
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::nn::{join, Backbone, Conv, Module};
use crate::real::Real;

#[derive(Debug, Clone)]
pub struct KNeXt {
    /// Input channels: 2, or 4 when the reference k-space is concatenated.
    pub cin: usize,
    pub shallow: Conv,
    pub backbone: Backbone,
    pub cb5: Cb5,
}

impl KNeXt {
    pub fn new(name: &str, cfg: &ModelConfig, with_reference: bool) -> Result<Self> {
        let cin = if with_reference { 4 } else { 2 };
        let g0 = cfg.g0();
        Ok(KNeXt {
            cin,
            shallow: Conv::new(join(name, "shallow"), cin, g0, 3),
            backbone: Backbone::new(&join(name, "backbone"), &cfg.kspace)?,
            cb5: Cb5::new(&join(name, "cb5"), g0),
        })
    }

    /// `k_ref` must be given exactly when the network was built with a
    /// reference input.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, k_in: Var, k_ref: Option<Var>) -> Result<Var> {
        let x = match (k_ref, self.cin) {
            (None, 2) => k_in,
            (Some(r), 4) => g.concat(&[k_in, r])?,
            _ => return Err(Error::invalid("k_next", "reference input does not match the network build")),
        };
        let f = self.shallow.forward(g, x)?;
        let gf = self.backbone.forward(g, f)?;
        let out = self.cb5.forward(g, gf)?;
        g.add(out, k_in)
    }

    pub fn breakdown(&self) -> Vec<(&'static str, usize)> {
        alloc::vec![
            ("shallow", self.shallow.count_params()),
            ("backbone", self.backbone.count_params()),
            ("cb5", self.cb5.count_params()),
        ]
    }
}

impl Module for KNeXt {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.shallow.specs(out);
        self.backbone.specs(out);
        self.cb5.specs(out);
    }
}
