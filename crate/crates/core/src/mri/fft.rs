//! Centered, orthonormal 2D DFT over 2-channel (re, im) grids.
//!
//! Power-of-two lengths use an iterative radix-2 transform; other lengths
//! fall back to a direct O(n²) DFT.

use alloc::vec;
use alloc::vec::Vec;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default)]
struct C<T> {
    re: T,
    im: T,
}

impl<T: Real> C<T> {
    #[inline]
    fn mul(self, o: Self) -> Self {
        C {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    #[inline]
    fn add(self, o: Self) -> Self {
        C {
            re: self.re + o.re,
            im: self.im + o.im,
        }
    }
    #[inline]
    fn sub(self, o: Self) -> Self {
        C {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
}

struct Plan<T> {
    n: usize,
    twiddle: Vec<C<T>>,
}

impl<T: Real> Plan<T> {
    fn new(n: usize, inverse: bool) -> Self {
        let sign = if inverse { 1.0 } else { -1.0 };
        let twiddle = (0..n)
            .map(|k| {
                let a = sign * 2.0 * core::f64::consts::PI * k as f64 / n as f64;
                C {
                    re: T::of(libm::cos(a)),
                    im: T::of(libm::sin(a)),
                }
            })
            .collect();
        Plan { n, twiddle }
    }

    /// In-place unnormalised transform of `buf`.
    fn run(&self, buf: &mut [C<T>], scratch: &mut [C<T>]) {
        let n = self.n;
        if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            for i in 0..n {
                let j = if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) };
                if j > i {
                    buf.swap(i, j);
                }
            }
            let mut len = 2;
            while len <= n {
                let step = n / len;
                for start in (0..n).step_by(len) {
                    for k in 0..len / 2 {
                        let w = self.twiddle[k * step];
                        let a = buf[start + k];
                        let b = buf[start + k + len / 2].mul(w);
                        buf[start + k] = a.add(b);
                        buf[start + k + len / 2] = a.sub(b);
                    }
                }
                len <<= 1;
            }
        } else {
            for (k, out) in scratch.iter_mut().enumerate().take(n) {
                let mut acc = C::default();
                for (j, &v) in buf.iter().enumerate() {
                    acc = acc.add(v.mul(self.twiddle[(j * k) % n]));
                }
                *out = acc;
            }
            buf.copy_from_slice(&scratch[..n]);
        }
    }
}

/// Centered orthonormal 1D transform applied to every line of a strided
/// view.  `get`/`set` address element `j` of line `l`.
fn centered_lines<T: Real>(
    re: &mut [T],
    im: &mut [T],
    lines: usize,
    n: usize,
    index: impl Fn(usize, usize) -> usize,
    inverse: bool,
) {
    let plan = Plan::<T>::new(n, inverse);
    let scale = T::of(1.0 / libm::sqrt(n as f64));
    let half = n / 2;
    let mut buf = vec![C::default(); n];
    let mut scratch = vec![C::default(); n];
    for l in 0..lines {
        // ifftshift on the way in
        for (j, b) in buf.iter_mut().enumerate() {
            let src = index(l, (j + half) % n);
            *b = C {
                re: re[src],
                im: im[src],
            };
        }
        plan.run(&mut buf, &mut scratch);
        // fftshift on the way out
        for k in 0..n {
            let v = buf[(k + n - half) % n];
            let dst = index(l, k);
            re[dst] = v.re * scale;
            im[dst] = v.im * scale;
        }
    }
}

/// Centered orthonormal 2D transform of a 2×H×W (re, im) buffer.
pub fn fft2c_raw<T: Real>(data: &[T], h: usize, w: usize, inverse: bool) -> Vec<T> {
    let mut out = data.to_vec();
    let (re, im) = out.split_at_mut(h * w);
    centered_lines(re, im, h, w, |l, j| l * w + j, inverse);
    centered_lines(re, im, w, h, |l, j| j * w + l, inverse);
    out
}

fn check<T: Real>(x: &Tensor<T>) -> Result<(usize, usize)> {
    let s = x.shape();
    if s.len() != 3 || s[0] != 2 || s[1] < 2 || s[2] < 2 {
        return Err(Error::shape("fft2c", s, &[2, 2, 2]));
    }
    if !x.all_finite() {
        return Err(Error::NonFinite { op: "fft2c" });
    }
    Ok((s[1], s[2]))
}

/// Centered orthonormal forward transform of a 2×H×W complex grid.
pub fn fft2c<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = check(x)?;
    Tensor::new(x.shape(), fft2c_raw(x.data(), h, w, false))
}

/// Inverse of [`fft2c`].
pub fn ifft2c<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = check(x)?;
    Tensor::new(x.shape(), fft2c_raw(x.data(), h, w, true))
}
