//! Raw forward/backward kernels over row-major slices.
//!
//! Shapes are passed explicitly; callers validate them.

use alloc::vec;
use alloc::vec::Vec;

use crate::real::Real;

/// Zero-padded "same" 2D convolution geometry.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub dilation: usize,
}

impl ConvGeom {
    fn pad(&self) -> isize {
        ((self.k - 1) * self.dilation / 2) as isize
    }

    /// Calls `f(co, ci, weight_index, dy, dx, y0..y1, x0..x1)` for every tap
    /// with the output ranges whose shifted input stays inside the image.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, isize, isize, (usize, usize), (usize, usize))) {
        let (h, w) = (self.h as isize, self.w as isize);
        let pad = self.pad();
        for co in 0..self.cout {
            for ci in 0..self.cin {
                for ky in 0..self.k {
                    let dy = (ky * self.dilation) as isize - pad;
                    let y0 = (-dy).max(0);
                    let y1 = (h - dy).min(h);
                    if y0 >= y1 {
                        continue;
                    }
                    for kx in 0..self.k {
                        let dx = (kx * self.dilation) as isize - pad;
                        let x0 = (-dx).max(0);
                        let x1 = (w - dx).min(w);
                        if x0 >= x1 {
                            continue;
                        }
                        let wi = ((co * self.cin + ci) * self.k + ky) * self.k + kx;
                        f(co, ci, wi, dy, dx, (y0 as usize, y1 as usize), (x0 as usize, x1 as usize));
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Real>(g: &ConvGeom, x: &[T], weight: &[T], bias: Option<&[T]>, out: &mut [T]) {
    let hw = g.h * g.w;
    if let Some(b) = bias {
        for co in 0..g.cout {
            out[co * hw..(co + 1) * hw].iter_mut().for_each(|v| *v = b[co]);
        }
    } else {
        out.iter_mut().for_each(|v| *v = T::zero());
    }
    g.for_each_tap(|co, ci, wi, dy, dx, (y0, y1), (x0, x1)| {
        let wv = weight[wi];
        if wv == T::zero() {
            return;
        }
        for y in y0..y1 {
            let yi = (y as isize + dy) as usize;
            let o = co * hw + y * g.w;
            let i = ci * hw + yi * g.w;
            let xs = (x0 as isize + dx) as usize;
            let src = &x[i + xs..i + xs + (x1 - x0)];
            let dst = &mut out[o + x0..o + x1];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += wv * s;
            }
        }
    });
}

/// Accumulates input, weight and bias gradients of [`conv2d_forward`].
pub fn conv2d_backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    weight: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    gb: Option<&mut [T]>,
) {
    let hw = g.h * g.w;
    if let Some(gb) = gb {
        for co in 0..g.cout {
            gb[co] += gout[co * hw..(co + 1) * hw].iter().copied().sum::<T>();
        }
    }
    g.for_each_tap(|co, ci, wi, dy, dx, (y0, y1), (x0, x1)| {
        let wv = weight[wi];
        let mut acc = T::zero();
        for y in y0..y1 {
            let yi = (y as isize + dy) as usize;
            let o = co * hw + y * g.w;
            let i = ci * hw + yi * g.w;
            let xs = (x0 as isize + dx) as usize;
            let go = &gout[o + x0..o + x1];
            if gw.is_some() {
                let src = &x[i + xs..i + xs + (x1 - x0)];
                acc += go.iter().zip(src).map(|(&a, &b)| a * b).sum::<T>();
            }
            if let Some(gx) = gx.as_deref_mut() {
                if wv != T::zero() {
                    let dst = &mut gx[i + xs..i + xs + (x1 - x0)];
                    for (d, &s) in dst.iter_mut().zip(go) {
                        *d += wv * s;
                    }
                }
            }
        }
        if let Some(gw) = gw.as_deref_mut() {
            gw[wi] += acc;
        }
    });
}

fn transpose<T: Real>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}

#[inline]
fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (d, &s) in y.iter_mut().zip(x) {
        *d += alpha * s;
    }
}

/// `out (n×m) += a (n×k) · b (k×m)`, or `a · bᵀ` with `b` stored m×k when
/// `b_transposed`. The loop order is chosen so the innermost loop runs over
/// the longer of `m` and `k`.
fn gemm_acc<T: Real>(n: usize, k: usize, m: usize, a: &[T], b: &[T], b_transposed: bool, out: &mut [T]) {
    if m >= k {
        let owned;
        let b = if b_transposed {
            owned = transpose(m, k, b);
            &owned[..]
        } else {
            b
        };
        for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(m)).take(n) {
            for (l, &av) in arow.iter().enumerate() {
                if av != T::zero() {
                    axpy(av, &b[l * m..(l + 1) * m], orow);
                }
            }
        }
    } else {
        let owned;
        let b = if b_transposed {
            b
        } else {
            owned = transpose(k, m, b);
            &owned[..]
        };
        for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(m)).take(n) {
            for (o, brow) in orow.iter_mut().zip(b.chunks_exact(k)) {
                *o += dot(arow, brow);
            }
        }
    }
}

/// `out[b] = a[b] (n×m) · rhs[b] (m×d)` for every batch entry.
pub fn matmul<T: Real>(batch: usize, n: usize, m: usize, d: usize, a: &[T], rhs: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for bi in 0..batch {
        gemm_acc(
            n,
            m,
            d,
            &a[bi * n * m..(bi + 1) * n * m],
            &rhs[bi * m * d..(bi + 1) * m * d],
            false,
            &mut out[bi * n * d..(bi + 1) * n * d],
        );
    }
}

pub fn matmul_backward<T: Real>(
    batch: usize,
    n: usize,
    m: usize,
    d: usize,
    a: &[T],
    rhs: &[T],
    gout: &[T],
    mut ga: Option<&mut [T]>,
    mut gr: Option<&mut [T]>,
) {
    for bi in 0..batch {
        let a = &a[bi * n * m..(bi + 1) * n * m];
        let r = &rhs[bi * m * d..(bi + 1) * m * d];
        let go = &gout[bi * n * d..(bi + 1) * n * d];
        if let Some(ga) = ga.as_deref_mut() {
            gemm_acc(n, d, m, go, r, true, &mut ga[bi * n * m..(bi + 1) * n * m]);
        }
        if let Some(gr) = gr.as_deref_mut() {
            let at = transpose(n, m, a);
            gemm_acc(m, n, d, &at, go, false, &mut gr[bi * m * d..(bi + 1) * m * d]);
        }
    }
}

/// `out[b] = a[b] (n×d) · rhs[b]ᵀ (d×m)`.
pub fn matmul_nt<T: Real>(batch: usize, n: usize, m: usize, d: usize, a: &[T], rhs: &[T], out: &mut [T]) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for bi in 0..batch {
        gemm_acc(
            n,
            d,
            m,
            &a[bi * n * d..(bi + 1) * n * d],
            &rhs[bi * m * d..(bi + 1) * m * d],
            true,
            &mut out[bi * n * m..(bi + 1) * n * m],
        );
    }
}

pub fn matmul_nt_backward<T: Real>(
    batch: usize,
    n: usize,
    m: usize,
    d: usize,
    a: &[T],
    rhs: &[T],
    gout: &[T],
    mut ga: Option<&mut [T]>,
    mut gr: Option<&mut [T]>,
) {
    for bi in 0..batch {
        let a = &a[bi * n * d..(bi + 1) * n * d];
        let r = &rhs[bi * m * d..(bi + 1) * m * d];
        let go = &gout[bi * n * m..(bi + 1) * n * m];
        if let Some(ga) = ga.as_deref_mut() {
            gemm_acc(n, m, d, go, r, false, &mut ga[bi * n * d..(bi + 1) * n * d]);
        }
        if let Some(gr) = gr.as_deref_mut() {
            let gt = transpose(n, m, go);
            gemm_acc(m, n, d, &gt, a, false, &mut gr[bi * m * d..(bi + 1) * m * d]);
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorises.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let mut tail = T::zero();
    for (&x, &y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x * y;
    }
    for (x, y) in ca.zip(cb) {
        for i in 0..8 {
            acc[i] += x[i] * y[i];
        }
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Normalises each contiguous row of length `c`; returns per-row `1/σ`.
pub fn layernorm_forward<T: Real>(x: &[T], c: usize, eps: T, gain: &[T], shift: &[T], out: &mut [T]) {
    let cf = T::of(c as f64);
    for (row, orow) in x.chunks_exact(c).zip(out.chunks_exact_mut(c)) {
        let mean = row.iter().copied().sum::<T>() / cf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
        let inv = T::one() / (var + eps).sqrt();
        for i in 0..c {
            orow[i] = (row[i] - mean) * inv * gain[i] + shift[i];
        }
    }
}

pub fn layernorm_backward<T: Real>(
    x: &[T],
    c: usize,
    eps: T,
    gain: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gg: Option<&mut [T]>,
    mut gs: Option<&mut [T]>,
) {
    let cf = T::of(c as f64);
    let mut xhat = alloc::vec![T::zero(); c];
    let mut gxh = alloc::vec![T::zero(); c];
    for (r, (row, grow)) in x.chunks_exact(c).zip(gout.chunks_exact(c)).enumerate() {
        let mean = row.iter().copied().sum::<T>() / cf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / cf;
        let inv = T::one() / (var + eps).sqrt();
        for i in 0..c {
            xhat[i] = (row[i] - mean) * inv;
            gxh[i] = grow[i] * gain[i];
        }
        if let Some(gg) = gg.as_deref_mut() {
            for i in 0..c {
                gg[i] += grow[i] * xhat[i];
            }
        }
        if let Some(gs) = gs.as_deref_mut() {
            for i in 0..c {
                gs[i] += grow[i];
            }
        }
        if let Some(gx) = gx.as_deref_mut() {
            let s1: T = gxh.iter().copied().sum();
            let s2: T = gxh.iter().zip(&xhat).map(|(&a, &b)| a * b).sum();
            let gx = &mut gx[r * c..(r + 1) * c];
            for i in 0..c {
                gx[i] += inv / cf * (cf * gxh[i] - s1 - xhat[i] * s2);
            }
        }
    }
}

/// Splits `shape` around `axis` into (outer, len, inner) strides.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax_forward<T: Real>(x: &[T], (outer, len, inner): (usize, usize, usize), out: &mut [T]) {
    if inner == 1 {
        for (row, orow) in x.chunks_exact(len).zip(out.chunks_exact_mut(len)) {
            let mx = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let mut s = T::zero();
            for (o, &v) in orow.iter_mut().zip(row) {
                *o = (v - mx).exp();
                s += *o;
            }
            let inv = T::one() / s;
            orow.iter_mut().for_each(|o| *o *= inv);
        }
        return;
    }
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut mx = T::neg_infinity();
            for k in 0..len {
                mx = mx.max(x[base + k * inner]);
            }
            let mut s = T::zero();
            for k in 0..len {
                let e = (x[base + k * inner] - mx).exp();
                out[base + k * inner] = e;
                s += e;
            }
            for k in 0..len {
                out[base + k * inner] /= s;
            }
        }
    }
}

pub fn softmax_backward<T: Real>(y: &[T], gout: &[T], (outer, len, inner): (usize, usize, usize), gx: &mut [T]) {
    if inner == 1 {
        for ((yr, gr), xr) in y.chunks_exact(len).zip(gout.chunks_exact(len)).zip(gx.chunks_exact_mut(len)) {
            let s = dot(yr, gr);
            for ((d, &yv), &gv) in xr.iter_mut().zip(yr).zip(gr) {
                *d += yv * (gv - s);
            }
        }
        return;
    }
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            let mut s = T::zero();
            for k in 0..len {
                s += y[base + k * inner] * gout[base + k * inner];
            }
            for k in 0..len {
                let j = base + k * inner;
                gx[j] += y[j] * (gout[j] - s);
            }
        }
    }
}
