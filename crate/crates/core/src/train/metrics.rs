//! PSNR and SSIM on magnitude images normalised by the reference maximum.

use alloc::vec::Vec;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::mri::magnitude;
use crate::real::Real;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Magnitudes of `x` and `reference`, both divided by the reference's
/// maximum magnitude.
pub fn normalized_magnitudes<T: Real>(x: &Tensor<T>, reference: &Tensor<T>) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.shape() != reference.shape() || x.ndim() != 3 || x.shape()[0] != 2 {
        return Err(Error::shape("metrics", x.shape(), reference.shape()));
    }
    let mr: Vec<f64> = magnitude(reference).into_iter().map(Real::f64).collect();
    let peak = mr.iter().copied().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let mx = magnitude(x).into_iter().map(|v| v.f64() * scale).collect();
    Ok((mx, mr.into_iter().map(|v| v * scale).collect()))
}

/// `10·log10(1/MSE)` with peak 1; `+∞` when the images are equal.
pub fn psnr_values(x: &[f64], reference: &[f64]) -> Result<f64> {
    if x.len() != reference.len() || x.is_empty() {
        return Err(Error::shape("psnr", &[x.len()], &[reference.len()]));
    }
    let mse = x.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * libm::log10(mse) })
}

pub fn psnr<T: Real>(x: &Tensor<T>, reference: &Tensor<T>) -> Result<f64> {
    let (a, b) = normalized_magnitudes(x, reference)?;
    psnr_values(&a, &b)
}

/// Normalised 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut taps = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - c;
        *t = libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable Gaussian filter over valid positions.
fn filter(img: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = alloc::vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * img[y * w + x + i]).sum();
        }
    }
    let mut out = alloc::vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = taps.iter().enumerate().map(|(i, t)| t * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM of two H×W images with dynamic range 1.
pub fn ssim_values(x: &[f64], y: &[f64], h: usize, w: usize) -> Result<f64> {
    if x.len() != h * w || y.len() != h * w {
        return Err(Error::shape("ssim", &[x.len()], &[h * w]));
    }
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid("ssim", "image smaller than the 11×11 window"));
    }
    let taps = gaussian_taps();
    let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).collect::<Vec<_>>();
    let mx = filter(x, h, w, &taps);
    let my = filter(y, h, w, &taps);
    let sxx = filter(&prod(x, x), h, w, &taps);
    let syy = filter(&prod(y, y), h, w, &taps);
    let sxy = filter(&prod(x, y), h, w, &taps);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (a, b) = (mx[i], my[i]);
            let va = sxx[i] - a * a;
            let vb = syy[i] - b * b;
            let cov = sxy[i] - a * b;
            ((2.0 * a * b + c1) * (2.0 * cov + c2)) / ((a * a + b * b + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / n as f64)
}

pub fn ssim<T: Real>(x: &Tensor<T>, reference: &Tensor<T>) -> Result<f64> {
    let (a, b) = normalized_magnitudes(x, reference)?;
    let s = reference.shape();
    ssim_values(&a, &b, s[1], s[2])
}
