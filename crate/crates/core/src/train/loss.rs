use crate::diff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::Intermediate;
use crate::real::Real;

/// How each residual term is reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossNorm {
    /// Root-sum-square over every entry.
    #[default]
    L2,
    /// Sum of squares.
    SquaredL2,
    /// Mean of squares.
    MeanSquared,
}

impl LossNorm {
    pub fn as_str(self) -> &'static str {
        match self {
            LossNorm::L2 => "l2",
            LossNorm::SquaredL2 => "squared_l2",
            LossNorm::MeanSquared => "mean_squared",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [LossNorm::L2, LossNorm::SquaredL2, LossNorm::MeanSquared].into_iter().find(|n| n.as_str() == s)
    }
}

fn residual<T: Real>(g: &mut Graph<'_, T>, pred: Var, target: Var, norm: LossNorm) -> Result<Var> {
    let d = g.sub(pred, target)?;
    match norm {
        LossNorm::L2 => g.l2_norm(d),
        LossNorm::SquaredL2 | LossNorm::MeanSquared => {
            let n = g.value(d).numel();
            let sq = g.mul(d, d)?;
            let s = g.sum(sq)?;
            if norm == LossNorm::MeanSquared {
                g.scale(s, 1.0 / n as f64)
            } else {
                Ok(s)
            }
        }
    }
}

/// Sum over recurrent blocks of the k-space residual of `K_K` and the image
/// residual of `ifft2c(K_dc)`.
pub fn dudo_loss<T: Real>(
    g: &mut Graph<'_, T>,
    blocks: &[Intermediate],
    k_gt: &Tensor<T>,
    i_gt: &Tensor<T>,
    norm: LossNorm,
) -> Result<Var> {
    if blocks.is_empty() {
        return Err(Error::invalid("dudo_loss", "no intermediates"));
    }
    let kg = g.leaf(k_gt.clone());
    let ig = g.leaf(i_gt.clone());
    let mut total: Option<Var> = None;
    for b in blocks {
        let tk = residual(g, b.k_k, kg, norm)?;
        let img = g.ifft2c(b.k_dc)?;
        let ti = residual(g, img, ig, norm)?;
        let t = g.add(tk, ti)?;
        total = Some(match total {
            Some(acc) => g.add(acc, t)?,
            None => t,
        });
    }
    Ok(total.expect("at least one block"))
}
