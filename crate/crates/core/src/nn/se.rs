use alloc::vec::Vec;

use super::{join, Dense, Module};
use crate::diff::{Graph, ParamSpec, Var};
use crate::error::{Error, Result};
use crate::real::Real;

/// Squeeze-and-excitation channel gating.
#[derive(Debug, Clone)]
pub struct Se {
    pub c: usize,
    pub squeeze: Dense,
    pub excite: Dense,
}

impl Se {
    pub fn new(name: &str, c: usize, reduction: usize) -> Result<Self> {
        if reduction == 0 || c < reduction {
            return Err(Error::invalid("se", "channel count below the reduction factor"));
        }
        Ok(Se {
            c,
            squeeze: Dense::new(join(name, "squeeze"), c, c / reduction),
            excite: Dense::new(join(name, "excite"), c / reduction, c),
        })
    }

    /// Per-channel gates in (0, 1).
    pub fn gates<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let pooled = g.channel_mean(x)?;
        let h = self.squeeze.forward(g, pooled)?;
        let h = g.relu(h)?;
        let e = self.excite.forward(g, h)?;
        g.sigmoid(e)
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let s = self.gates(g, x)?;
        g.channel_scale(x, s)
    }
}

impl Module for Se {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.squeeze.specs(out);
        self.excite.specs(out);
    }
}
