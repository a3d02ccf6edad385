//! Procedural paired-contrast phantoms.
//!
//! Both contrasts share one label map (anatomy); each label gets an
//! independently drawn intensity per contrast.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Two contrasts of the same synthetic anatomy, each a 2×S×S grid with
/// zero imaginary part and magnitude in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomPair<T> {
    /// Target-like contrast.
    pub contrast_a: Tensor<T>,
    /// Reference-like contrast.
    pub contrast_b: Tensor<T>,
}

const MIN_INTENSITY: f64 = 0.15;
const MIN_CONTRAST_GAP: f64 = 0.08;

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64, rot: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64, rot: f64 },
    Line { y0: f64, x0: f64, y1: f64, x1: f64, half_width: f64 },
    Dot { y: usize, x: usize },
}

impl Shape {
    fn contains(&self, y: usize, x: usize) -> bool {
        let (py, px) = (y as f64 + 0.5, x as f64 + 0.5);
        match *self {
            Shape::Ellipse { cy, cx, ry, rx, rot } => {
                let (u, v) = rotate(py - cy, px - cx, rot);
                (u / ry) * (u / ry) + (v / rx) * (v / rx) <= 1.0
            }
            Shape::Rect { cy, cx, hy, hx, rot } => {
                let (u, v) = rotate(py - cy, px - cx, rot);
                u.abs() <= hy && v.abs() <= hx
            }
            Shape::Line { y0, x0, y1, x1, half_width } => {
                let (dy, dx) = (y1 - y0, x1 - x0);
                let len2 = dy * dy + dx * dx;
                let t = (((py - y0) * dy + (px - x0) * dx) / len2).clamp(0.0, 1.0);
                let (ey, ex) = (py - (y0 + t * dy), px - (x0 + t * dx));
                libm::sqrt(ey * ey + ex * ex) <= half_width
            }
            Shape::Dot { y: dy, x: dx } => y == dy && x == dx,
        }
    }
}

fn rotate(y: f64, x: f64, rot: f64) -> (f64, f64) {
    let (s, c) = (libm::sin(rot), libm::cos(rot));
    (c * y + s * x, -s * y + c * x)
}

/// Deterministic phantom pair for `size ∈ {16, 32, 64}`.
///
/// An elliptical body holds 3–8 ellipses/rectangles, 1–3 thin lines and
/// 1–3 isolated dots.
pub fn gen_phantom_pair<T: Real>(size: usize, seed: u64) -> Result<PhantomPair<T>> {
    if !matches!(size, 16 | 32 | 64) {
        return Err(Error::PhantomSize(size));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let body = Shape::Ellipse {
        cy: s / 2.0 + rng.random_range(-0.04..0.04) * s,
        cx: s / 2.0 + rng.random_range(-0.04..0.04) * s,
        ry: rng.random_range(0.36..0.46) * s,
        rx: rng.random_range(0.30..0.42) * s,
        rot: rng.random_range(-0.4..0.4),
    };

    let mut shapes = vec![body];
    let inner = |rng: &mut ChaCha8Rng| (rng.random_range(0.3..0.7) * s, rng.random_range(0.3..0.7) * s);
    for _ in 0..rng.random_range(3..=8) {
        let (cy, cx) = inner(&mut rng);
        let rot = rng.random_range(0.0..core::f64::consts::PI);
        let shape = if rng.random_bool(0.5) {
            Shape::Ellipse {
                cy,
                cx,
                ry: rng.random_range(0.05..0.16) * s,
                rx: rng.random_range(0.05..0.16) * s,
                rot,
            }
        } else {
            Shape::Rect {
                cy,
                cx,
                hy: rng.random_range(0.04..0.13) * s,
                hx: rng.random_range(0.04..0.13) * s,
                rot,
            }
        };
        shapes.push(shape);
    }
    for _ in 0..rng.random_range(1..=3) {
        let (y0, x0) = inner(&mut rng);
        let (y1, x1) = inner(&mut rng);
        shapes.push(Shape::Line {
            y0,
            x0,
            y1: y1 + 1.0,
            x1,
            half_width: rng.random_range(0.45..0.9),
        });
    }
    for _ in 0..rng.random_range(1..=3) {
        let (y, x) = inner(&mut rng);
        shapes.push(Shape::Dot {
            y: y as usize,
            x: x as usize,
        });
    }

    // painter's order; 0 = air, everything else lies inside the body
    let mut labels = vec![0usize; size * size];
    for y in 0..size {
        for x in 0..size {
            if !shapes[0].contains(y, x) {
                continue;
            }
            let mut l = 1;
            for (k, sh) in shapes.iter().enumerate().skip(1) {
                if sh.contains(y, x) {
                    l = k + 1;
                }
            }
            labels[y * size + x] = l;
        }
    }

    let n_labels = shapes.len() + 1;
    let (a, b) = loop {
        let mut draw = || -> Vec<f64> {
            let mut v: Vec<f64> = (0..n_labels).map(|_| rng.random_range(MIN_INTENSITY..=1.0)).collect();
            v[0] = 0.0;
            v
        };
        let ia = draw();
        let ib = draw();
        let a = render(&labels, &ia);
        let b = render(&labels, &ib);
        let (mut diff, mut count) = (0.0, 0usize);
        for (&x, &y) in a.iter().zip(&b) {
            if x > 0.0 {
                diff += libm::fabs(x - y);
                count += 1;
            }
        }
        if count > 0 && diff / count as f64 > MIN_CONTRAST_GAP {
            break (a, b);
        }
    };

    let to_grid = |img: Vec<f64>| {
        let mut data: Vec<T> = img.into_iter().map(T::of).collect();
        data.resize(2 * size * size, T::zero());
        Tensor::new(&[2, size, size], data)
    };
    Ok(PhantomPair {
        contrast_a: to_grid(a)?,
        contrast_b: to_grid(b)?,
    })
}

fn render(labels: &[usize], intensity: &[f64]) -> Vec<f64> {
    let img: Vec<f64> = labels.iter().map(|&l| intensity[l]).collect();
    let mx = img.iter().copied().fold(0.0, f64::max);
    img.into_iter().map(|v| v / mx).collect()
}

/// Magnitude image `sqrt(re² + im²)` of a 2×H×W grid.
pub fn magnitude<T: Real>(grid: &Tensor<T>) -> Vec<T> {
    let n = grid.numel() / 2;
    let (re, im) = grid.data().split_at(n);
    re.iter().zip(im).map(|(&r, &i)| (r * r + i * i).sqrt()).collect()
}

/// Pixels with magnitude above `threshold`.
pub fn support<T: Real>(grid: &Tensor<T>, threshold: f64) -> Vec<bool> {
    magnitude(grid).into_iter().map(|m| m.f64() > threshold).collect()
}
