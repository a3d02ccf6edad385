//! Image-domain reconstruction network conditioned on the reference.

use alloc::vec::Vec;

use super::config::ModelConfig;
use super::fusion::FeatureFusion;
use super::pass::ShallowEncoder;
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::Result;
use crate::nn::{join, Backbone, Conv, Module, Se};
use crate::real::Real;

/// Final 3×3 conv + relu followed by a linear 3×3 projection to 2 channels.
#[derive(Debug, Clone)]
pub struct Cb5 {
    pub hidden: Conv,
    pub out: Conv,
}

impl Cb5 {
    pub fn new(name: &str, g0: usize) -> Self {
        Cb5 {
            hidden: Conv::new(join(name, "conv0"), g0, g0, 3),
            out: Conv::new(join(name, "conv1"), g0, 2, 3).tail(),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.hidden.forward(g, x)?;
        let h = g.relu(h)?;
        self.out.forward(g, h)
    }
}

impl Module for Cb5 {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.hidden.specs(out);
        self.out.specs(out);
    }
}

#[derive(Debug, Clone)]
pub struct IUniNeXt {
    pub encoder: ShallowEncoder,
    pub fusion: FeatureFusion,
    pub backbone: Backbone,
    pub se: Se,
    pub se_proj: Conv,
    pub cb5: Cb5,
}

impl IUniNeXt {
    pub fn new(name: &str, cfg: &ModelConfig) -> Result<Self> {
        let g0 = cfg.g0();
        Ok(IUniNeXt {
            encoder: ShallowEncoder::new(&join(name, "pass"), cfg.encoder, 2, g0, cfg.cb_convs),
            fusion: FeatureFusion::new(&join(name, "fuse"), cfg.fusion, g0, cfg.c2f_heads, cfg.c2f_windows)?,
            backbone: Backbone::new(&join(name, "backbone"), &cfg.image)?,
            se: Se::new(&join(name, "se"), g0, cfg.se_reduction)?,
            se_proj: Conv::new(join(name, "se_proj"), g0, 2, 1).tail(),
            cb5: Cb5::new(&join(name, "cb5"), g0),
        })
    }

    /// Maps the 2-channel image `i_k` to a refined 2-channel image. The
    /// reference is `None` when unavailable.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, i_k: Var, i_ref: Option<Var>) -> Result<Var> {
        let (ft, fr) = self.encoder.forward(g, i_k, i_ref)?;
        let f0 = self.fusion.forward(g, ft, fr)?;
        let gf = self.backbone.forward(g, f0)?;
        let se = self.se.forward(g, f0)?;
        let a = self.se_proj.forward(g, se)?;
        let b = self.cb5.forward(g, gf)?;
        g.add(a, b)
    }

    /// Learnable scalars per submodule.
    pub fn breakdown(&self) -> Vec<(&'static str, usize)> {
        alloc::vec![
            ("shallow_encoder", self.encoder.count_params()),
            ("fusion", self.fusion.count_params()),
            ("backbone", self.backbone.count_params()),
            ("se", self.se.count_params() + self.se_proj.count_params()),
            ("cb5", self.cb5.count_params()),
        ]
    }
}

impl Module for IUniNeXt {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.encoder.specs(out);
        self.fusion.specs(out);
        self.backbone.specs(out);
        self.se.specs(out);
        self.se_proj.specs(out);
        self.cb5.specs(out);
    }
}
