//! Define-by-run reverse-mode tape.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{self, ConvGeom};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::mri::fft::fft2c_raw;
use crate::real::Real;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Gelu,
    Sigmoid,
}

/// Gather index entry that produces a zero.
pub const GATHER_ZERO: usize = usize::MAX;

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Param(usize),
    Conv2d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom },
    Dense { x: Var, w: Var, b: Option<Var>, din: usize, dout: usize },
    LayerNorm { x: Var, g: Var, s: Var, eps: T },
    Act { x: Var, kind: Activation },
    Softmax { x: Var, split: (usize, usize, usize) },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Max(Var, Var),
    Scale(Var, T),
    AddBroadcast(Var, Var),
    Concat(Vec<Var>),
    Gather { x: Var, index: Vec<usize> },
    Reshape(Var),
    MatMul { a: Var, b: Var, dims: [usize; 4] },
    MatMulNt { a: Var, b: Var, dims: [usize; 4] },
    ChannelMean(Var),
    ChannelScale(Var, Var),
    Fft { x: Var, inverse: bool },
    Select { x: Var, keep_measured: Vec<bool> },
    Sum(Var),
    L2Norm(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Operations recorded in execution order.  Rebuilt for every forward pass.
#[derive(Debug)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn gelu<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    half * x * (T::one() + (x * T::of(core::f64::consts::FRAC_1_SQRT_2)).erf())
}

fn gelu_grad<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    let cdf = half * (T::one() + (x * T::of(core::f64::consts::FRAC_1_SQRT_2)).erf());
    let pdf = (-half * x * x).exp() * T::of(0.398_942_280_401_432_7);
    cdf + x * pdf
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, inputs: &[Var], name: &'static str) -> Result<Var> {
        let value = value.check_finite(name)?;
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        self.nodes.push(Node { value, op, needs_grad });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Constant input; never receives a gradient.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf bound to parameter `index` of the store passed to [`Tape::backward`].
    pub fn param_leaf(&mut self, index: usize, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Param(index),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Zero-padded "same" convolution of a Cin×H×W map with a Cout×Cin×k×k kernel.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, dilation: usize) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.len() != 3 || ws.len() != 4 {
            return Err(Error::shape("conv2d", xs, ws));
        }
        if ws[1] != xs[0] {
            return Err(Error::shape("conv2d", xs, ws));
        }
        if ws[2] != ws[3] || ws[2].is_multiple_of(2) {
            return Err(Error::invalid("conv2d", "kernel must be square with odd size"));
        }
        if dilation == 0 {
            return Err(Error::invalid("conv2d", "dilation must be positive"));
        }
        let geom = ConvGeom {
            cin: xs[0],
            cout: ws[0],
            h: xs[1],
            w: xs[2],
            k: ws[2],
            dilation,
        };
        if let Some(b) = b {
            if self.shape(b) != [geom.cout] {
                return Err(Error::shape("conv2d bias", self.shape(b), &[geom.cout]));
            }
        }
        let mut out = Tensor::zeros(&[geom.cout, geom.h, geom.w]);
        kernels::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(out, Op::Conv2d { x, w, b, geom }, &inputs, "conv2d")
    }

    /// Affine map over the trailing axis with a Din×Dout weight.
    pub fn dense(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w);
        if ws.len() != 2 || xs.last() != Some(&ws[0]) {
            return Err(Error::shape("dense", &xs, ws));
        }
        let (din, dout) = (ws[0], ws[1]);
        if let Some(b) = b {
            if self.shape(b) != [dout] {
                return Err(Error::shape("dense bias", self.shape(b), &[dout]));
            }
        }
        let rows = self.value(x).numel() / din;
        let mut shape = xs.clone();
        *shape.last_mut().unwrap() = dout;
        let mut out = Tensor::zeros(&shape);
        kernels::matmul(1, rows, din, dout, self.value(x).data(), self.value(w).data(), out.data_mut());
        if let Some(b) = b {
            let bias = self.value(b).data().to_vec();
            for row in out.data_mut().chunks_exact_mut(dout) {
                for (o, &bv) in row.iter_mut().zip(&bias) {
                    *o += bv;
                }
            }
        }
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push(out, Op::Dense { x, w, b, din, dout }, &inputs, "dense")
    }

    /// Normalises over the trailing axis, then applies gain and shift.
    pub fn layernorm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let xs = self.shape(x);
        let c = *xs.last().unwrap();
        if c == 0 || self.shape(gain) != [c] || self.shape(shift) != [c] {
            return Err(Error::shape("layernorm", xs, self.shape(gain)));
        }
        let eps = T::of(eps);
        let mut out = Tensor::zeros(xs);
        kernels::layernorm_forward(
            self.value(x).data(),
            c,
            eps,
            self.value(gain).data(),
            self.value(shift).data(),
            out.data_mut(),
        );
        self.push(out, Op::LayerNorm { x, g: gain, s: shift, eps }, &[x, gain, shift], "layernorm")
    }

    pub fn act(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let out = match kind {
            Activation::Relu => self.value(x).map(|v| v.max(T::zero())),
            Activation::Gelu => self.value(x).map(gelu),
            Activation::Sigmoid => self.value(x).map(sigmoid),
        };
        self.push(out, Op::Act { x, kind }, &[x], "activation")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.act(x, Activation::Relu)
    }

    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.act(x, Activation::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.act(x, Activation::Sigmoid)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x);
        if axis >= xs.len() {
            return Err(Error::invalid("softmax", "axis out of range"));
        }
        let split = kernels::axis_split(xs, axis);
        let mut out = Tensor::zeros(xs);
        kernels::softmax_forward(self.value(x).data(), split, out.data_mut());
        self.push(out, Op::Softmax { x, split }, &[x], "softmax")
    }

    fn zip(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[a, b], "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), &[a, b], "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[a, b], "mul")
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip(a, b, "maximum", |x, y| if x >= y { x } else { y })?;
        self.push(out, Op::Max(a, b), &[a, b], "maximum")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let c = T::of(c);
        let out = self.value(x).map(|v| v * c);
        self.push(out, Op::Scale(x, c), &[x], "scale")
    }

    /// `a + b` where `b`'s shape equals the trailing dimensions of `a`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (sa, sb) = (va.shape(), vb.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(Error::shape("add_broadcast", sa, sb));
        }
        let mut out = va.clone();
        for chunk in out.data_mut().chunks_exact_mut(vb.numel()) {
            for (o, &v) in chunk.iter_mut().zip(vb.data()) {
                *o += v;
            }
        }
        self.push(out, Op::AddBroadcast(a, b), &[a, b], "add_broadcast")
    }

    /// Concatenation along the leading axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let rest = self.shape(*first)[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let s = self.shape(p);
            if s[1..] != *rest {
                return Err(Error::shape("concat", s, &rest));
            }
            lead += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&rest);
        let out = Tensor::new(&shape, data)?;
        self.push(out, Op::Concat(parts.to_vec()), parts, "concat")
    }

    /// `out[i] = x[index[i]]`, or zero where `index[i]` is the zero marker.
    ///
    /// Covers permutations, padding, cropping and slicing.
    pub fn gather(&mut self, x: Var, index: Vec<usize>, shape: &[usize]) -> Result<Var> {
        let n: usize = shape.iter().product();
        if n != index.len() {
            return Err(Error::shape("gather", shape, &[index.len()]));
        }
        let src = self.value(x).data();
        if index.iter().any(|&i| i != GATHER_ZERO && i >= src.len()) {
            return Err(Error::invalid("gather", "index out of range"));
        }
        let data = index.iter().map(|&i| if i == GATHER_ZERO { T::zero() } else { src[i] }).collect();
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Gather { x, index }, &[x], "gather")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        self.push(out, Op::Reshape(x), &[x], "reshape")
    }

    /// Batched `[B,n,m] · [B,m,d] -> [B,n,d]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let dims = [sa[0], sa[1], sa[2], sb[2]];
        let mut out = Tensor::zeros(&[dims[0], dims[1], dims[3]]);
        kernels::matmul(dims[0], dims[1], dims[2], dims[3], self.value(a).data(), self.value(b).data(), out.data_mut());
        self.push(out, Op::MatMul { a, b, dims }, &[a, b], "matmul")
    }

    /// Batched `[B,n,d] · [B,m,d]ᵀ -> [B,n,m]`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[2] {
            return Err(Error::shape("matmul_nt", sa, sb));
        }
        let dims = [sa[0], sa[1], sb[1], sa[2]];
        let mut out = Tensor::zeros(&[dims[0], dims[1], dims[2]]);
        kernels::matmul_nt(dims[0], dims[1], dims[2], dims[3], self.value(a).data(), self.value(b).data(), out.data_mut());
        self.push(out, Op::MatMulNt { a, b, dims }, &[a, b], "matmul_nt")
    }

    /// Spatial mean of every channel of a C×H×W map.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 {
            return Err(Error::shape("channel_mean", s, &[0, 0, 0]));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let inv = T::of(1.0 / hw as f64);
        let data = self
            .value(x)
            .data()
            .chunks_exact(hw)
            .map(|ch| ch.iter().copied().sum::<T>() * inv)
            .collect();
        let out = Tensor::new(&[c], data)?;
        self.push(out, Op::ChannelMean(x), &[x], "channel_mean")
    }

    /// Rescales channel `c` of a C×H×W map by `s[c]`.
    pub fn channel_scale(&mut self, x: Var, s: Var) -> Result<Var> {
        let xs = self.shape(x);
        if xs.len() != 3 || self.shape(s) != [xs[0]] {
            return Err(Error::shape("channel_scale", xs, self.shape(s)));
        }
        let hw = xs[1] * xs[2];
        let scales = self.value(s).data().to_vec();
        let mut out = self.value(x).clone();
        for (ch, &sc) in out.data_mut().chunks_exact_mut(hw).zip(&scales) {
            ch.iter_mut().for_each(|v| *v *= sc);
        }
        self.push(out, Op::ChannelScale(x, s), &[x, s], "channel_scale")
    }

    fn fft(&mut self, x: Var, inverse: bool) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 3 || s[0] != 2 || s[1] < 2 || s[2] < 2 {
            return Err(Error::shape("fft2c", s, &[2, 0, 0]));
        }
        let (h, w) = (s[1], s[2]);
        let data = fft2c_raw(self.value(x).data(), h, w, inverse);
        let out = Tensor::new(&[2, h, w], data)?;
        self.push(out, Op::Fft { x, inverse }, &[x], "fft2c")
    }

    /// Centered orthonormal 2D FFT of a 2×H×W (re, im) grid.
    pub fn fft2c(&mut self, x: Var) -> Result<Var> {
        self.fft(x, false)
    }

    pub fn ifft2c(&mut self, x: Var) -> Result<Var> {
        self.fft(x, true)
    }

    /// `out[i] = measured[i]` where `keep_measured[i]`, else `x[i]`.
    pub fn select(&mut self, x: Var, measured: &Tensor<T>, keep_measured: Vec<bool>) -> Result<Var> {
        let vx = self.value(x);
        if vx.shape() != measured.shape() || keep_measured.len() != vx.numel() {
            return Err(Error::shape("select", vx.shape(), measured.shape()));
        }
        let data = vx
            .data()
            .iter()
            .zip(measured.data())
            .zip(&keep_measured)
            .map(|((&p, &m), &k)| if k { m } else { p })
            .collect();
        let out = Tensor::new(vx.shape(), data)?;
        self.push(out, Op::Select { x, keep_measured }, &[x], "select")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push(out, Op::Sum(x), &[x], "sum")
    }

    /// Euclidean norm of all entries.
    pub fn l2_norm(&mut self, x: Var) -> Result<Var> {
        let out = Tensor::scalar(self.value(x).sq_norm().sqrt());
        self.push(out, Op::L2Norm(x), &[x], "l2_norm")
    }

    /// Accumulates `d loss / d param` into `params`' gradients.
    ///
    /// Gradients are added to whatever the store already holds; call
    /// [`ParamStore::zero_grads`] between steps.
    pub fn backward(&self, loss: Var, params: &mut ParamStore<T>) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), T::one()));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            self.backprop(&node.op, &node.value, g, &mut grads, params)?;
        }
        Ok(())
    }

    fn slot<'g>(&self, grads: &'g mut [Option<Tensor<T>>], v: Var) -> Option<&'g mut Tensor<T>> {
        if !self.needs(v) {
            return None;
        }
        let shape = self.shape(v);
        Some(grads[v.0].get_or_insert_with(|| Tensor::zeros(shape)))
    }

    fn fresh(&self, v: Var) -> Option<Tensor<T>> {
        self.needs(v).then(|| Tensor::zeros(self.shape(v)))
    }

    fn backprop(
        &self,
        op: &Op<T>,
        out: &Tensor<T>,
        g: Tensor<T>,
        grads: &mut [Option<Tensor<T>>],
        params: &mut ParamStore<T>,
    ) -> Result<()> {
        let gd = g.data();
        match *op {
            Op::Leaf => {}
            Op::Param(idx) => {
                if idx >= params.len() || params.grad_at(idx).shape() != g.shape() {
                    return Err(Error::invalid("backward", "tape bound to a different parameter store"));
                }
                params.grad_at_mut(idx).add_assign(&g);
            }
            Op::Conv2d { x, w, b, geom } => {
                let xv = self.value(x).data();
                let wv = self.value(w).data();
                let mut gx = self.fresh(x);
                let mut gw = self.fresh(w);
                let mut gb = b.and_then(|b| self.fresh(b));
                kernels::conv2d_backward(
                    &geom,
                    xv,
                    wv,
                    gd,
                    gx.as_mut().map(|t| t.data_mut()),
                    gw.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                add_to(grads, x, gx);
                add_to(grads, w, gw);
                if let Some(b) = b {
                    add_to(grads, b, gb);
                }
            }
            Op::Dense { x, w, b, din, dout } => {
                let rows = gd.len() / dout;
                let xv = self.value(x).data();
                let wv = self.value(w).data();
                let mut gx = self.fresh(x);
                let mut gw = self.fresh(w);
                kernels::matmul_backward(
                    1,
                    rows,
                    din,
                    dout,
                    xv,
                    wv,
                    gd,
                    gx.as_mut().map(|t| t.data_mut()),
                    gw.as_mut().map(|t| t.data_mut()),
                );
                add_to(grads, x, gx);
                add_to(grads, w, gw);
                if let Some(b) = b {
                    if let Some(gb) = self.slot(grads, b) {
                        let gb = gb.data_mut();
                        for row in gd.chunks_exact(dout) {
                            for (a, &v) in gb.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    }
                }
            }
            Op::LayerNorm { x, g: gain, s, eps } => {
                let c = gain_len(self, gain);
                let mut gx = self.fresh(x);
                let mut gg = self.fresh(gain);
                let mut gs = self.fresh(s);
                kernels::layernorm_backward(
                    self.value(x).data(),
                    c,
                    eps,
                    self.value(gain).data(),
                    gd,
                    gx.as_mut().map(|t| t.data_mut()),
                    gg.as_mut().map(|t| t.data_mut()),
                    gs.as_mut().map(|t| t.data_mut()),
                );
                add_to(grads, x, gx);
                add_to(grads, gain, gg);
                add_to(grads, s, gs);
            }
            Op::Act { x, kind } => {
                let xv = self.value(x).data();
                if let Some(gx) = self.slot(grads, x) {
                    let gx = gx.data_mut();
                    for i in 0..gd.len() {
                        let d = match kind {
                            Activation::Relu => {
                                if xv[i] > T::zero() {
                                    T::one()
                                } else {
                                    T::zero()
                                }
                            }
                            Activation::Gelu => gelu_grad(xv[i]),
                            Activation::Sigmoid => out.data()[i] * (T::one() - out.data()[i]),
                        };
                        gx[i] += gd[i] * d;
                    }
                }
            }
            Op::Softmax { x, split } => {
                if let Some(gx) = self.slot(grads, x) {
                    kernels::softmax_backward(out.data(), gd, split, gx.data_mut());
                }
            }
            Op::Add(a, b) => {
                accumulate(self.slot(grads, a), gd, |g, _| g);
                accumulate(self.slot(grads, b), gd, |g, _| g);
            }
            Op::Sub(a, b) => {
                accumulate(self.slot(grads, a), gd, |g, _| g);
                accumulate(self.slot(grads, b), gd, |g, _| -g);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                accumulate(self.slot(grads, a), gd, |g, i| g * bv[i]);
                accumulate(self.slot(grads, b), gd, |g, i| g * av[i]);
            }
            Op::Max(a, b) => {
                let (av, bv) = (self.value(a).data(), self.value(b).data());
                accumulate(self.slot(grads, a), gd, |g, i| if av[i] >= bv[i] { g } else { T::zero() });
                accumulate(self.slot(grads, b), gd, |g, i| if av[i] >= bv[i] { T::zero() } else { g });
            }
            Op::Scale(x, c) => accumulate(self.slot(grads, x), gd, |g, _| g * c),
            Op::AddBroadcast(a, b) => {
                accumulate(self.slot(grads, a), gd, |g, _| g);
                if let Some(gb) = self.slot(grads, b) {
                    let n = gb.numel();
                    let gb = gb.data_mut();
                    for chunk in gd.chunks_exact(n) {
                        for (d, &v) in gb.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Concat(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    if let Some(gp) = self.slot(grads, p) {
                        for (d, &v) in gp.data_mut().iter_mut().zip(&gd[off..off + n]) {
                            *d += v;
                        }
                    }
                    off += n;
                }
            }
            Op::Gather { x, ref index } => {
                if let Some(gx) = self.slot(grads, x) {
                    let gx = gx.data_mut();
                    for (&src, &v) in index.iter().zip(gd) {
                        if src != GATHER_ZERO {
                            gx[src] += v;
                        }
                    }
                }
            }
            Op::Reshape(x) => accumulate(self.slot(grads, x), gd, |g, _| g),
            Op::MatMul { a, b, dims: [bt, n, m, d] } => {
                let mut ga = self.fresh(a);
                let mut gb = self.fresh(b);
                kernels::matmul_backward(
                    bt,
                    n,
                    m,
                    d,
                    self.value(a).data(),
                    self.value(b).data(),
                    gd,
                    ga.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                add_to(grads, a, ga);
                add_to(grads, b, gb);
            }
            Op::MatMulNt { a, b, dims: [bt, n, m, d] } => {
                let mut ga = self.fresh(a);
                let mut gb = self.fresh(b);
                kernels::matmul_nt_backward(
                    bt,
                    n,
                    m,
                    d,
                    self.value(a).data(),
                    self.value(b).data(),
                    gd,
                    ga.as_mut().map(|t| t.data_mut()),
                    gb.as_mut().map(|t| t.data_mut()),
                );
                add_to(grads, a, ga);
                add_to(grads, b, gb);
            }
            Op::ChannelMean(x) => {
                let s = self.shape(x);
                let hw = s[1] * s[2];
                let inv = T::of(1.0 / hw as f64);
                accumulate(self.slot(grads, x), &[], |_, i| gd[i / hw] * inv);
            }
            Op::ChannelScale(x, s) => {
                let hw = self.shape(x)[1] * self.shape(x)[2];
                let sv = self.value(s).data();
                let xv = self.value(x).data();
                accumulate(self.slot(grads, x), gd, |g, i| g * sv[i / hw]);
                if let Some(gs) = self.slot(grads, s) {
                    for (c, d) in gs.data_mut().iter_mut().enumerate() {
                        *d += kernels::dot(&gd[c * hw..(c + 1) * hw], &xv[c * hw..(c + 1) * hw]);
                    }
                }
            }
            Op::Fft { x, inverse } => {
                // unitary, so the adjoint is the inverse transform
                let s = self.shape(x);
                let back = fft2c_raw(gd, s[1], s[2], !inverse);
                accumulate(self.slot(grads, x), &back, |g, _| g);
            }
            Op::Select { x, ref keep_measured } => {
                accumulate(self.slot(grads, x), gd, |g, i| if keep_measured[i] { T::zero() } else { g });
            }
            Op::Sum(x) => {
                let g0 = gd[0];
                accumulate(self.slot(grads, x), &[], |_, _| g0);
            }
            Op::L2Norm(x) => {
                let norm = out.data()[0];
                let xv = self.value(x).data();
                let g0 = gd[0];
                if norm > T::zero() {
                    accumulate(self.slot(grads, x), &[], |_, i| g0 * xv[i] / norm);
                }
            }
        }
        Ok(())
    }
}

fn gain_len<T: Real>(tape: &Tape<T>, gain: Var) -> usize {
    tape.shape(gain)[0]
}

fn add_to<T: Real>(grads: &mut [Option<Tensor<T>>], v: Var, t: Option<Tensor<T>>) {
    if let Some(t) = t {
        match &mut grads[v.0] {
            Some(g) => g.add_assign(&t),
            slot => *slot = Some(t),
        }
    }
}

/// `dst[i] += f(src[i], i)`; an empty `src` passes zeros.
fn accumulate<T: Real>(dst: Option<&mut Tensor<T>>, src: &[T], f: impl Fn(T, usize) -> T) {
    if let Some(dst) = dst {
        for (i, d) in dst.data_mut().iter_mut().enumerate() {
            let s = if src.is_empty() { T::zero() } else { src[i] };
            *d += f(s, i);
        }
    }
}
