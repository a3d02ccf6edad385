use alloc::vec::Vec;

use super::{join, Conv, Drdb, Module, Stl};
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Channel width `⌊αc⌋` produced by the X-TL transition layer.
pub fn xtl_width(c: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid("x_tl", "alpha must lie in (0, 1]"));
    }
    // exact for products like 0.5 * 64
    let w = libm::floor(alpha * c as f64 + 1e-9) as usize;
    if w < 1 {
        return Err(Error::invalid("x_tl", "floor(alpha * c) < 1"));
    }
    Ok(w)
}

/// Fused output of a hybrid block with both branch features.
#[derive(Debug, Clone, Copy)]
pub struct BlockOutput {
    pub fused: Var,
    pub cnn_branch: Var,
    pub vit_branch: Var,
}

/// CNN–ViT hybrid block: a DRDB branch and an X-TL→STL branch from the same
/// input, concatenated and fused by a 1×1 convolution.
#[derive(Debug, Clone)]
pub struct Xbb {
    pub g0: usize,
    pub drdb: Drdb,
    pub xtl: Conv,
    pub stl: Stl,
    pub fusion: Conv,
}

impl Xbb {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        g0: usize,
        growth: usize,
        convs: usize,
        alpha: f64,
        window: usize,
        heads: usize,
    ) -> Result<Self> {
        let cv = xtl_width(g0, alpha)?;
        Ok(Xbb {
            g0,
            drdb: Drdb::new(&join(name, "drdb"), g0, growth, convs),
            xtl: Conv::new(join(name, "xtl"), g0, cv, 1),
            stl: Stl::new(&join(name, "stl"), cv, heads, window)?,
            fusion: Conv::new(join(name, "fusion"), g0 + cv, g0, 1),
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<BlockOutput> {
        if g.shape(x)[0] != self.g0 {
            return Err(Error::shape("xbb", g.shape(x), &[self.g0]));
        }
        let cnn_branch = self.drdb.forward(g, x)?;
        let compressed = self.xtl.forward(g, x)?;
        let vit_branch = self.stl.forward(g, compressed)?;
        let both = g.concat(&[cnn_branch, vit_branch])?;
        let fused = self.fusion.forward(g, both)?;
        Ok(BlockOutput {
            fused,
            cnn_branch,
            vit_branch,
        })
    }
}

impl Module for Xbb {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.drdb.specs(out);
        self.xtl.specs(out);
        self.stl.specs(out);
        self.fusion.specs(out);
    }
}

/// Residual Swin transformer block: STL chain, 3×3 conv, block residual.
#[derive(Debug, Clone)]
pub struct Rstb {
    pub stls: Vec<Stl>,
    pub conv: Conv,
}

pub const RSTB_LAYERS: usize = 2;

impl Rstb {
    pub fn new(name: &str, c: usize, heads: usize, window: usize) -> Result<Self> {
        let stls = (0..RSTB_LAYERS)
            .map(|i| Stl::new(&join(name, &alloc::format!("stl{i}")), c, heads, window))
            .collect::<Result<_>>()?;
        Ok(Rstb {
            stls,
            conv: Conv::new(join(name, "conv"), c, c, 3).tail(),
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let mut y = x;
        for s in &self.stls {
            y = s.forward(g, y)?;
        }
        let y = self.conv.forward(g, y)?;
        g.add(y, x)
    }
}

impl Module for Rstb {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.stls.iter().for_each(|s| s.specs(out));
        self.conv.specs(out);
    }
}
