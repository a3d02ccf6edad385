//! Shallow feature encoders for the target and reference images.

use alloc::format;
use alloc::vec::Vec;

use super::config::Encoder;
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::nn::{join, Conv, ConvBlock, Module};
use crate::real::Real;

const STAGES: usize = 3;

fn chain(name: &str, cin: usize, g0: usize, convs: usize) -> Vec<ConvBlock> {
    (0..STAGES)
        .map(|i| ConvBlock::new(&join(name, &format!("cb{}", i + 1)), if i == 0 { cin } else { g0 }, g0, convs))
        .collect()
}

#[derive(Debug, Clone)]
struct Specific {
    blocks: Vec<ConvBlock>,
    fuse: Vec<Conv>,
}

#[derive(Debug, Clone)]
pub struct ShallowEncoder {
    pub mode: Encoder,
    cin: usize,
    shared: Vec<ConvBlock>,
    tar: Option<Specific>,
    reference: Option<Specific>,
    cb4_tar: ConvBlock,
    cb4_ref: ConvBlock,
}

impl ShallowEncoder {
    pub fn new(name: &str, mode: Encoder, cin: usize, g0: usize, convs: usize) -> Self {
        let specific = |branch: &str, with_fuse: bool| {
            let bn = join(name, branch);
            Specific {
                blocks: chain(&bn, cin, g0, convs),
                fuse: if with_fuse {
                    (0..STAGES).map(|i| Conv::new(join(&bn, &format!("fuse{}", i + 1)), 2 * g0, g0, 1)).collect()
                } else {
                    Vec::new()
                },
            }
        };
        let (shared, tar, reference, cb4_tar, cb4_ref) = match mode {
            Encoder::Shared => {
                let cb4 = ConvBlock::new(&join(name, "cb4"), g0, g0, convs);
                (chain(&join(name, "shared"), cin, g0, convs), None, None, cb4.clone(), cb4)
            }
            Encoder::Distinct => (
                Vec::new(),
                Some(specific("tar", false)),
                Some(specific("ref", false)),
                ConvBlock::new(&join(name, "tar.cb4"), g0, g0, convs),
                ConvBlock::new(&join(name, "ref.cb4"), g0, g0, convs),
            ),
            Encoder::PaSS => {
                let cb4 = ConvBlock::new(&join(name, "cb4"), g0, g0, convs);
                (
                    chain(&join(name, "shared"), cin, g0, convs),
                    Some(specific("tar", true)),
                    Some(specific("ref", true)),
                    cb4.clone(),
                    cb4,
                )
            }
        };
        ShallowEncoder { mode, cin, shared, tar, reference, cb4_tar, cb4_ref }
    }

    fn branch<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, specific: Option<&Specific>, cb4: &ConvBlock) -> Result<Var> {
        let mut f = x;
        match (self.mode, specific) {
            (Encoder::Shared, _) => {
                for b in &self.shared {
                    f = b.forward(g, f)?;
                }
            }
            (Encoder::Distinct, Some(s)) => {
                for b in &s.blocks {
                    f = b.forward(g, f)?;
                }
            }
            (Encoder::PaSS, Some(s)) => {
                let mut shared = x;
                for ((sb, tb), fuse) in self.shared.iter().zip(&s.blocks).zip(&s.fuse) {
                    shared = sb.forward(g, shared)?;
                    let spec = tb.forward(g, f)?;
                    let cat = g.concat(&[spec, shared])?;
                    f = fuse.forward(g, cat)?;
                }
            }
            _ => unreachable!("specific branches exist for non-shared encoders"),
        }
        cb4.forward(g, f)
    }

    /// Encodes the target and, when given, the reference image.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, tar: Var, reference: Option<Var>) -> Result<(Var, Option<Var>)> {
        if g.shape(tar).first() != Some(&self.cin) {
            return Err(Error::shape("shallow_encoder", g.shape(tar), &[self.cin]));
        }
        if let Some(r) = reference {
            if g.shape(r) != g.shape(tar) {
                return Err(Error::shape("shallow_encoder", g.shape(tar), g.shape(r)));
            }
        }
        let ft = self.branch(g, tar, self.tar.as_ref(), &self.cb4_tar)?;
        let fr = match reference {
            Some(r) => Some(self.branch(g, r, self.reference.as_ref(), &self.cb4_ref)?),
            None => None,
        };
        Ok((ft, fr))
    }
}

impl Module for ShallowEncoder {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.shared.iter().for_each(|b| b.specs(out));
        for s in [&self.tar, &self.reference].into_iter().flatten() {
            s.blocks.iter().for_each(|b| b.specs(out));
            s.fuse.iter().for_each(|c| c.specs(out));
        }
        self.cb4_tar.specs(out);
        self.cb4_ref.specs(out);
    }
}
