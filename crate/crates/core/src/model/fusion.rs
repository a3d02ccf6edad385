use alloc::format;
use alloc::vec::Vec;

use super::config::Fusion;
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::Result;
use crate::nn::{join, Conv, Module, WindowAttention};
use crate::real::Real;

/// Two stacked window attentions, the first with the coarser window for
/// AdaC2F and the finer one for AdaF2C.
#[derive(Debug, Clone)]
pub struct C2fAttention {
    pub stages: Vec<WindowAttention>,
}

impl C2fAttention {
    pub fn new(name: &str, c: usize, heads: usize, windows: [usize; 2]) -> Result<Self> {
        let stages = windows
            .iter()
            .enumerate()
            .map(|(i, &w)| WindowAttention::new(&join(name, &format!("wmsa{i}")), c, heads, w, true))
            .collect::<Result<_>>()?;
        Ok(C2fAttention { stages })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, mut x: Var) -> Result<Var> {
        for s in &self.stages {
            x = s.forward(g, x)?;
        }
        Ok(x)
    }
}

impl Module for C2fAttention {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.stages.iter().for_each(|s| s.specs(out));
    }
}

#[derive(Debug, Clone)]
pub struct FeatureFusion {
    pub variant: Fusion,
    attn: Option<(C2fAttention, C2fAttention)>,
    hemis: Option<Conv>,
}

impl FeatureFusion {
    pub fn new(name: &str, variant: Fusion, g0: usize, heads: usize, windows: [usize; 2]) -> Result<Self> {
        let attn = match variant {
            Fusion::AdaC2F | Fusion::AdaF2C => {
                let w = if variant == Fusion::AdaC2F { windows } else { [windows[1], windows[0]] };
                Some((
                    C2fAttention::new(&join(name, "tar"), g0, heads, w)?,
                    C2fAttention::new(&join(name, "ref"), g0, heads, w)?,
                ))
            }
            _ => None,
        };
        let hemis = (variant == Fusion::HeMIS).then(|| Conv::new(join(name, "hemis"), 2 * g0, g0, 1));
        Ok(FeatureFusion { variant, attn, hemis })
    }

    fn reweigh<T: Real>(g: &mut Graph<'_, T>, attn: &C2fAttention, f: Var) -> Result<Var> {
        let a = attn.forward(g, f)?;
        let w = g.softmax(a, 0)?;
        g.mul(f, w)
    }

    /// `f_ref` is `None` when no reference is available; the reference
    /// parameters are then never touched.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, f_tar: Var, f_ref: Option<Var>) -> Result<Var> {
        match self.variant {
            Fusion::Max => match f_ref {
                Some(r) => g.maximum(f_tar, r),
                None => Ok(f_tar),
            },
            Fusion::AdaC2F | Fusion::AdaF2C => {
                let (at, ar) = self.attn.as_ref().expect("attention built for adaptive fusion");
                let t = Self::reweigh(g, at, f_tar)?;
                match f_ref {
                    Some(r) => {
                        let r = Self::reweigh(g, ar, r)?;
                        g.maximum(t, r)
                    }
                    None => Ok(t),
                }
            }
            Fusion::HeMIS => {
                let (mean, var) = match f_ref {
                    Some(r) => {
                        let s = g.add(f_tar, r)?;
                        let mean = g.scale(s, 0.5)?;
                        let d = g.sub(f_tar, r)?;
                        let d2 = g.mul(d, d)?;
                        (mean, g.scale(d2, 0.25)?)
                    }
                    None => {
                        let zero = g.scale(f_tar, 0.0)?;
                        (f_tar, zero)
                    }
                };
                let cat = g.concat(&[mean, var])?;
                self.hemis.as_ref().expect("hemis conv").forward(g, cat)
            }
        }
    }
}

impl Module for FeatureFusion {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        if let Some((t, r)) = &self.attn {
            t.specs(out);
            r.specs(out);
        }
        if let Some(c) = &self.hemis {
            c.specs(out);
        }
    }
}
