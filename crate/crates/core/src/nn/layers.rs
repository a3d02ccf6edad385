use alloc::string::String;
use alloc::vec::Vec;

use super::{join, Module};
use crate::diff::{Graph, Init, ParamSpec, Var};
use crate::error::Result;
use crate::real::Real;

/// "Same"-padded 2D convolution with bias.
#[derive(Debug, Clone)]
pub struct Conv {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub dilation: usize,
    /// Zero-initialised in default builds (last layer of a residual branch).
    pub tail: bool,
}

impl Conv {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize) -> Self {
        Conv {
            name: name.into(),
            cin,
            cout,
            k,
            dilation: 1,
            tail: false,
        }
    }

    pub fn dilated(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn tail(mut self) -> Self {
        self.tail = true;
        self
    }

    pub fn weight_name(&self) -> String {
        join(&self.name, "weight")
    }

    pub fn bias_name(&self) -> String {
        join(&self.name, "bias")
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.p(&self.weight_name())?;
        let b = g.p(&self.bias_name())?;
        g.conv2d(x, w, Some(b), self.dilation)
    }
}

impl Module for Conv {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let fan_in = self.cin * self.k * self.k;
        let init = if self.tail { Init::tail(fan_in) } else { Init::fan_in(fan_in) };
        out.push(ParamSpec::new(self.weight_name(), &[self.cout, self.cin, self.k, self.k], init));
        out.push(ParamSpec::new(self.bias_name(), &[self.cout], init));
    }
}

/// Affine map over the trailing axis.
#[derive(Debug, Clone)]
pub struct Dense {
    pub name: String,
    pub din: usize,
    pub dout: usize,
    pub tail: bool,
}

impl Dense {
    pub fn new(name: impl Into<String>, din: usize, dout: usize) -> Self {
        Dense {
            name: name.into(),
            din,
            dout,
            tail: false,
        }
    }

    pub fn tail(mut self) -> Self {
        self.tail = true;
        self
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.p(&join(&self.name, "weight"))?;
        let b = g.p(&join(&self.name, "bias"))?;
        g.dense(x, w, Some(b))
    }
}

impl Module for Dense {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        let init = if self.tail { Init::tail(self.din) } else { Init::fan_in(self.din) };
        out.push(ParamSpec::new(join(&self.name, "weight"), &[self.din, self.dout], init));
        out.push(ParamSpec::new(join(&self.name, "bias"), &[self.dout], init));
    }
}

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub name: String,
    pub c: usize,
}

impl LayerNorm {
    pub fn new(name: impl Into<String>, c: usize) -> Self {
        LayerNorm { name: name.into(), c }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gain = g.p(&join(&self.name, "gain"))?;
        let shift = g.p(&join(&self.name, "shift"))?;
        g.layernorm(x, gain, shift, LN_EPS)
    }
}

impl Module for LayerNorm {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        out.push(ParamSpec::new(join(&self.name, "gain"), &[self.c], Init::Ones));
        out.push(ParamSpec::new(join(&self.name, "shift"), &[self.c], Init::Zeros));
    }
}

/// Convolution block: `layers` 3×3 conv + relu stages.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub convs: Vec<Conv>,
}

impl ConvBlock {
    pub fn new(name: &str, cin: usize, cout: usize, layers: usize) -> Self {
        let convs = (0..layers.max(1))
            .map(|i| Conv::new(join(name, &alloc::format!("conv{i}")), if i == 0 { cin } else { cout }, cout, 3))
            .collect();
        ConvBlock { convs }
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, mut x: Var) -> Result<Var> {
        for c in &self.convs {
            let y = c.forward(g, x)?;
            x = g.relu(y)?;
        }
        Ok(x)
    }
}

impl Module for ConvBlock {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.convs.iter().for_each(|c| c.specs(out));
    }
}
