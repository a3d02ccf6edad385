//! Window multi-head self-attention and the Swin transformer layer.

use alloc::string::String;
use alloc::vec::Vec;

use super::{join, Dense, LayerNorm, Module};
use crate::diff::{Graph, Init, ParamSpec, Var, GATHER_ZERO};
use crate::error::{Error, Result};
use crate::real::Real;

fn windows(h: usize, w: usize, win: usize) -> (usize, usize) {
    (h.div_ceil(win), w.div_ceil(win))
}

/// Gather map from a C×H×W map to `[n_windows, win², C]` tokens, zero
/// padding H and W up to multiples of `win`.
pub fn partition_index(c: usize, h: usize, w: usize, win: usize) -> (Vec<usize>, [usize; 3]) {
    let (nwy, nwx) = windows(h, w, win);
    let n = win * win;
    let mut idx = Vec::with_capacity(nwy * nwx * n * c);
    for wy in 0..nwy {
        for wx in 0..nwx {
            for t in 0..n {
                let (y, x) = (wy * win + t / win, wx * win + t % win);
                for ch in 0..c {
                    idx.push(if y < h && x < w { (ch * h + y) * w + x } else { GATHER_ZERO });
                }
            }
        }
    }
    (idx, [nwy * nwx, n, c])
}

/// Inverse of [`partition_index`], cropping the padding.
pub fn merge_index(c: usize, h: usize, w: usize, win: usize) -> Vec<usize> {
    let (_, nwx) = windows(h, w, win);
    let n = win * win;
    let mut idx = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let win_id = (y / win) * nwx + x / win;
                let t = (y % win) * win + x % win;
                idx.push((win_id * n + t) * c + ch);
            }
        }
    }
    idx
}

/// Map `[nw, n, 3c]` → `[nw·heads, n, dh]` for q (part 0), k (1) or v (2).
fn head_split(nw: usize, n: usize, c: usize, heads: usize, part: usize) -> Vec<usize> {
    let dh = c / heads;
    let mut idx = Vec::with_capacity(nw * n * c);
    for win in 0..nw {
        for h in 0..heads {
            for t in 0..n {
                for d in 0..dh {
                    idx.push((win * n + t) * 3 * c + part * c + h * dh + d);
                }
            }
        }
    }
    idx
}

/// Map `[nw·heads, n, dh]` → `[nw, n, c]`.
fn head_merge(nw: usize, n: usize, c: usize, heads: usize) -> Vec<usize> {
    let dh = c / heads;
    let mut idx = Vec::with_capacity(nw * n * c);
    for win in 0..nw {
        for t in 0..n {
            for h in 0..heads {
                for d in 0..dh {
                    idx.push(((win * heads + h) * n + t) * dh + d);
                }
            }
        }
    }
    idx
}

/// Gather map from the `[(2w-1)², heads]` bias table to `[heads, w², w²]`.
fn relative_index(win: usize, heads: usize) -> Vec<usize> {
    let n = win * win;
    let span = 2 * win - 1;
    let mut idx = Vec::with_capacity(heads * n * n);
    for h in 0..heads {
        for i in 0..n {
            for j in 0..n {
                let dy = (i / win) as isize - (j / win) as isize + win as isize - 1;
                let dx = (i % win) as isize - (j % win) as isize + win as isize - 1;
                idx.push((dy as usize * span + dx as usize) * heads + h);
            }
        }
    }
    idx
}

/// Multi-head self-attention inside non-overlapping square windows.
#[derive(Debug, Clone)]
pub struct WindowAttention {
    pub name: String,
    pub c: usize,
    pub heads: usize,
    pub window: usize,
    pub rel_bias: bool,
    pub qkv: Dense,
    pub proj: Dense,
    bias_index: Vec<usize>,
}

impl WindowAttention {
    pub fn new(name: &str, c: usize, heads: usize, window: usize, rel_bias: bool) -> Result<Self> {
        if heads == 0 || !c.is_multiple_of(heads) {
            return Err(Error::invalid("wmsa", alloc::format!("{c} channels not divisible by {heads} heads")));
        }
        if window == 0 {
            return Err(Error::invalid("wmsa", "window must be positive"));
        }
        Ok(WindowAttention {
            name: name.into(),
            c,
            heads,
            window,
            rel_bias,
            qkv: Dense::new(join(name, "qkv"), c, 3 * c),
            proj: Dense::new(join(name, "proj"), c, c),
            bias_index: if rel_bias { relative_index(window, heads) } else { Vec::new() },
        })
    }

    /// Zero-initialise the output projection in default builds.
    pub fn tail_proj(mut self) -> Self {
        self.proj = self.proj.tail();
        self
    }

    fn table_name(&self) -> String {
        join(&self.name, "rel_bias")
    }

    /// Attention over tokens already grouped as `[n_windows, window², c]`.
    pub fn forward_tokens<T: Real>(&self, g: &mut Graph<'_, T>, tokens: Var) -> Result<Var> {
        let s = g.shape(tokens).to_vec();
        if s.len() != 3 || s[2] != self.c {
            return Err(Error::shape("wmsa", &s, &[0, 0, self.c]));
        }
        let (nw, n, c, heads) = (s[0], s[1], self.c, self.heads);
        let dh = c / heads;
        let qkv = self.qkv.forward(g, tokens)?;
        let split = [nw * heads, n, dh];
        let q = g.gather(qkv, head_split(nw, n, c, heads, 0), &split)?;
        let q = g.scale(q, 1.0 / libm::sqrt(dh as f64))?;
        let k = g.gather(qkv, head_split(nw, n, c, heads, 1), &split)?;
        let v = g.gather(qkv, head_split(nw, n, c, heads, 2), &split)?;
        let mut scores = g.matmul_nt(q, k)?;
        if self.rel_bias {
            if n != self.window * self.window {
                return Err(Error::invalid("wmsa", "token count does not match the window"));
            }
            let table = g.p(&self.table_name())?;
            let bias = g.gather(table, self.bias_index.clone(), &[heads, n, n])?;
            let grouped = g.reshape(scores, &[nw, heads, n, n])?;
            let biased = g.add_broadcast(grouped, bias)?;
            scores = g.reshape(biased, &[nw * heads, n, n])?;
        }
        let attn = g.softmax(scores, 2)?;
        let out = g.matmul(attn, v)?;
        let merged = g.gather(out, head_merge(nw, n, c, heads), &[nw, n, c])?;
        self.proj.forward(g, merged)
    }

    /// Window attention on a C×H×W map (zero pad, attend, crop).
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[0] != self.c {
            return Err(Error::shape("wmsa", &s, &[self.c]));
        }
        let (idx, shape) = partition_index(s[0], s[1], s[2], self.window);
        let tokens = g.gather(x, idx, &shape)?;
        let y = self.forward_tokens(g, tokens)?;
        g.gather(y, merge_index(s[0], s[1], s[2], self.window), &s)
    }
}

impl Module for WindowAttention {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.qkv.specs(out);
        self.proj.specs(out);
        if self.rel_bias {
            let span = 2 * self.window - 1;
            out.push(ParamSpec::new(self.table_name(), &[span * span, self.heads], Init::Uniform(0.02)));
        }
    }
}

/// Pre-norm Swin transformer layer without window shifting:
/// `y = x + WMSA(LN(x))`, `z = y + MLP(LN(y))`.
#[derive(Debug, Clone)]
pub struct Stl {
    pub c: usize,
    pub window: usize,
    pub norm1: LayerNorm,
    pub attn: WindowAttention,
    pub norm2: LayerNorm,
    pub fc1: Dense,
    pub fc2: Dense,
}

pub const MLP_RATIO: usize = 2;

impl Stl {
    pub fn new(name: &str, c: usize, heads: usize, window: usize) -> Result<Self> {
        Ok(Stl {
            c,
            window,
            norm1: LayerNorm::new(join(name, "norm1"), c),
            attn: WindowAttention::new(&join(name, "attn"), c, heads, window, true)?.tail_proj(),
            norm2: LayerNorm::new(join(name, "norm2"), c),
            fc1: Dense::new(join(name, "fc1"), c, MLP_RATIO * c),
            fc2: Dense::new(join(name, "fc2"), MLP_RATIO * c, c).tail(),
        })
    }

    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let s = g.shape(x).to_vec();
        if s.len() != 3 || s[0] != self.c {
            return Err(Error::shape("stl", &s, &[self.c]));
        }
        let (idx, shape) = partition_index(s[0], s[1], s[2], self.window);
        let tokens = g.gather(x, idx, &shape)?;
        let a = self.norm1.forward(g, tokens)?;
        let a = self.attn.forward_tokens(g, a)?;
        let y = g.add(tokens, a)?;
        let m = self.norm2.forward(g, y)?;
        let m = self.fc1.forward(g, m)?;
        let m = g.gelu(m)?;
        let m = self.fc2.forward(g, m)?;
        let z = g.add(y, m)?;
        g.gather(z, merge_index(s[0], s[1], s[2], self.window), &s)
    }
}

impl Module for Stl {
    fn specs(&self, out: &mut Vec<ParamSpec>) {
        self.norm1.specs(out);
        self.attn.specs(out);
        self.norm2.specs(out);
        self.fc1.specs(out);
        self.fc2.specs(out);
    }
}
