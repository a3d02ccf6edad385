use alloc::format;
use alloc::vec::Vec;

use super::{join, xtl_width, Conv, Drdb, Module, Rstb, Xbb};
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Block family of a backbone.  `Ih(k)` replaces the last `k` DRDBs of a
/// DRDN with RSTBs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackboneVariant {
    Drdn,
    Rstb,
    Xbb,
    Ih(usize),
}

impl BackboneVariant {
    pub const ABLATION: [BackboneVariant; 6] = [
        BackboneVariant::Drdn,
        BackboneVariant::Rstb,
        BackboneVariant::Xbb,
        BackboneVariant::Ih(1),
        BackboneVariant::Ih(2),
        BackboneVariant::Ih(3),
    ];

    pub fn name(self) -> alloc::string::String {
        match self {
            BackboneVariant::Drdn => "DRDN".into(),
            BackboneVariant::Rstb => "RSTB".into(),
            BackboneVariant::Xbb => "XBB".into(),
            BackboneVariant::Ih(k) => format!("IH{k}"),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "DRDN" => Some(BackboneVariant::Drdn),
            "RSTB" => Some(BackboneVariant::Rstb),
            "XBB" => Some(BackboneVariant::Xbb),
            _ => s.strip_prefix("IH")?.parse().ok().map(BackboneVariant::Ih),
        }
    }
}

/// Backbone hyperparameters for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct XbbConfig {
    pub g0: usize,
    pub growth: usize,
    pub depth: usize,
    pub convs: usize,
    pub alpha: f64,
    pub window: usize,
    pub heads: usize,
    pub variant: BackboneVariant,
}

impl XbbConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid("xbb_config", m));
        if self.g0 == 0 || self.growth == 0 || self.depth == 0 || self.convs == 0 {
            return bad("G0, G, D and C must all be at least 1");
        }
        if self.window == 0 || self.heads == 0 {
            return bad("window and heads must be positive");
        }
        let vit = xtl_width(self.g0, self.alpha)?;
        if self.variant == BackboneVariant::Xbb && (vit < self.heads || vit % self.heads != 0) {
            return bad("floor(alpha * G0) must be a positive multiple of heads");
        }
        let uses_rstb = matches!(self.variant, BackboneVariant::Rstb | BackboneVariant::Ih(_));
        if uses_rstb && !self.g0.is_multiple_of(self.heads) {
            return bad("G0 must be divisible by heads for RSTB blocks");
        }
        if let BackboneVariant::Ih(k) = self.variant {
            if k == 0 || k > self.depth {
                return bad("IH variant replaces between 1 and D blocks");
            }
        }
        Ok(())
    }

    /// Block family at each depth position.
    pub fn block_kinds(&self) -> Vec<BlockKind> {
        (0..self.depth)
            .map(|j| match self.variant {
                BackboneVariant::Drdn => BlockKind::Drdb,
                BackboneVariant::Rstb => BlockKind::Rstb,
                BackboneVariant::Xbb => BlockKind::Xbb,
                BackboneVariant::Ih(k) if j + k >= self.depth => BlockKind::Rstb,
                BackboneVariant::Ih(_) => BlockKind::Drdb,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Drdb,
    Rstb,
    Xbb,
}

#[derive(Debug, Clone)]
pub enum Block {
    Drdb(Drdb),
    Rstb(Rstb),
    Xbb(Xbb),
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Drdb(_) => BlockKind::Drdb,
            Block::Rstb(_) => BlockKind::Rstb,
            Block::Xbb(_) => BlockKind::Xbb,
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        match self {
            Block::Drdb(b) => b.forward(g, x),
            Block::Rstb(b) => b.forward(g, x),
            Block::Xbb(b) => Ok(b.forward(g, x)?.fused),
        }
    }
}

impl Module for Block {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        match self {
            Block::Drdb(b) => b.specs(out),
            Block::Rstb(b) => b.specs(out),
            Block::Xbb(b) => b.specs(out),
        }
    }
}

/// `D` chained blocks whose outputs are concatenated and fused back to `G0`
/// channels by a 1×1 convolution.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub g0: usize,
    pub blocks: Vec<Block>,
    pub gff: Conv,
}

impl Backbone {
    pub fn new(name: &str, cfg: &XbbConfig) -> Result<Self> {
        cfg.validate()?;
        let blocks = cfg
            .block_kinds()
            .into_iter()
            .enumerate()
            .map(|(j, kind)| {
                let bn = join(name, &format!("block{j}"));
                Ok(match kind {
                    BlockKind::Drdb => Block::Drdb(Drdb::new(&bn, cfg.g0, cfg.growth, cfg.convs)),
                    BlockKind::Rstb => Block::Rstb(Rstb::new(&bn, cfg.g0, cfg.heads, cfg.window)?),
                    BlockKind::Xbb => Block::Xbb(Xbb::new(
                        &bn, cfg.g0, cfg.growth, cfg.convs, cfg.alpha, cfg.window, cfg.heads,
                    )?),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Backbone {
            g0: cfg.g0,
            blocks,
            gff: Conv::new(join(name, "gff"), cfg.depth * cfg.g0, cfg.g0, 1),
        })
    }

    pub fn kinds(&self) -> Vec<BlockKind> {
        self.blocks.iter().map(Block::kind).collect()
    }

    /// Returns the globally fused feature map.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        if g.shape(x)[0] != self.g0 {
            return Err(Error::shape("backbone", g.shape(x), &[self.g0]));
        }
        let mut feats = Vec::with_capacity(self.blocks.len());
        let mut f = x;
        for b in &self.blocks {
            f = b.forward(g, f)?;
            feats.push(f);
        }
        let all = if feats.len() == 1 { feats[0] } else { g.concat(&feats)? };
        self.gff.forward(g, all)
    }
}

impl Module for Backbone {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.blocks.iter().for_each(|b| b.specs(out));
        self.gff.specs(out);
    }
}
