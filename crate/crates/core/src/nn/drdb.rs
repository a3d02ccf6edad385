use alloc::format;
use alloc::vec::Vec;

use super::{join, Conv, Module};
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Dilation of dense layer `i`: cycles 1, 2, 4.
pub fn dilation_schedule(layers: usize) -> Vec<usize> {
    (0..layers).map(|i| 1 << (i % 3)).collect()
}

/// Dilated residual dense block.
///
/// Layer `i` sees the block input concatenated with every earlier layer's
/// `growth` output channels; a 1×1 local fusion maps back to `g0` channels
/// and the block input is added.
#[derive(Debug, Clone)]
pub struct Drdb {
    pub g0: usize,
    pub growth: usize,
    pub layers: Vec<Conv>,
    pub fusion: Conv,
}

impl Drdb {
    pub fn new(name: &str, g0: usize, growth: usize, convs: usize) -> Self {
        let layers = dilation_schedule(convs)
            .into_iter()
            .enumerate()
            .map(|(i, d)| Conv::new(join(name, &format!("dense{i}")), g0 + i * growth, growth, 3).dilated(d))
            .collect();
        Drdb {
            g0,
            growth,
            layers,
            fusion: Conv::new(join(name, "fusion"), g0 + convs * growth, g0, 1).tail(),
        }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        if g.shape(x)[0] != self.g0 {
            return Err(Error::shape("drdb", g.shape(x), &[self.g0]));
        }
        let mut feats = alloc::vec![x];
        for layer in &self.layers {
            let inp = if feats.len() == 1 { x } else { g.concat(&feats)? };
            let y = layer.forward(g, inp)?;
            feats.push(g.relu(y)?);
        }
        let all = g.concat(&feats)?;
        let fused = self.fusion.forward(g, all)?;
        g.add(fused, x)
    }
}

impl Module for Drdb {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.layers.iter().for_each(|l| l.specs(out));
        self.fusion.specs(out);
    }
}
