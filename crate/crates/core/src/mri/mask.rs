//! 1D Cartesian undersampling masks and hard data consistency.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// Column-wise Cartesian sampling pattern: entry `(r, c)` is `columns[c]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SamplingMask {
    columns: Vec<bool>,
    height: usize,
}

/// Number of centered auto-calibration columns for width `w`.
pub fn acs_count(w: usize, acs_frac: f64) -> usize {
    // tolerate float noise in products like 0.125 * 32
    let x = acs_frac * w as f64;
    let r = libm::round(x);
    if libm::fabs(x - r) < 1e-9 {
        r as usize
    } else {
        libm::ceil(x) as usize
    }
}

/// Total sampled columns for width `w` at acceleration `accel`.
pub fn sampled_count(w: usize, accel: f64) -> usize {
    libm::round(w as f64 / accel) as usize
}

/// First index of the centered ACS block.
pub fn acs_start(w: usize, acs: usize) -> usize {
    w / 2 - acs / 2
}

impl SamplingMask {
    pub fn from_columns(columns: Vec<bool>, height: usize) -> Self {
        SamplingMask { columns, height }
    }

    pub fn full(h: usize, w: usize) -> Self {
        SamplingMask {
            columns: vec![true; w],
            height: h,
        }
    }

    pub fn columns(&self) -> &[bool] {
        &self.columns
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn at(&self, _row: usize, col: usize) -> bool {
        self.columns[col]
    }

    pub fn sampled_columns(&self) -> usize {
        self.columns.iter().filter(|&&c| c).count()
    }

    pub fn is_full(&self) -> bool {
        self.columns.iter().all(|&c| c)
    }

    /// Per-element selector over a 2×H×W grid.
    pub fn expand(&self, channels: usize) -> Vec<bool> {
        let mut out = Vec::with_capacity(channels * self.height * self.width());
        for _ in 0..channels * self.height {
            out.extend_from_slice(&self.columns);
        }
        out
    }

    /// Mask as an H×W 0/1 tensor.
    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        let w = self.width();
        Tensor::from_fn(&[self.height, w], |i| if self.columns[i % w] { T::one() } else { T::zero() })
    }
}

/// Random 1D Cartesian mask with a fully sampled centered ACS block.
pub fn make_cartesian_mask(w: usize, h: usize, accel: f64, acs_frac: f64, seed: u64) -> Result<SamplingMask> {
    if !(accel >= 1.0) || !accel.is_finite() {
        return Err(Error::invalid("make_cartesian_mask", "acceleration must be >= 1"));
    }
    if !(acs_frac > 0.0 && acs_frac <= 1.0) {
        return Err(Error::invalid("make_cartesian_mask", "acs_frac must be in (0, 1]"));
    }
    if w == 0 || h == 0 {
        return Err(Error::invalid("make_cartesian_mask", "empty grid"));
    }
    let acs = acs_count(w, acs_frac).min(w);
    let total = sampled_count(w, accel);
    if total < acs {
        return Err(Error::InfeasibleMask { acs, total });
    }
    let start = acs_start(w, acs);
    let mut columns = vec![false; w];
    columns[start..start + acs].iter_mut().for_each(|c| *c = true);
    let mut rest: Vec<usize> = (0..w).filter(|c| !columns[*c]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, _) = rest.partial_shuffle(&mut rng, total - acs);
    for &c in picked.iter() {
        columns[c] = true;
    }
    Ok(SamplingMask { columns, height: h })
}

fn check_grid<T: Real>(op: &'static str, k: &Tensor<T>, mask: &SamplingMask) -> Result<()> {
    let want = [2, mask.height(), mask.width()];
    if k.shape() != want {
        return Err(Error::shape(op, k.shape(), &want));
    }
    Ok(())
}

/// Zeroes every unsampled k-space entry.
pub fn undersample<T: Real>(kspace: &Tensor<T>, mask: &SamplingMask) -> Result<Tensor<T>> {
    check_grid("undersample", kspace, mask)?;
    let w = mask.width();
    let mut out = kspace.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if !mask.columns[i % w] {
            *v = T::zero();
        }
    }
    Ok(out)
}

/// Hard data consistency: measured values on sampled entries, predictions
/// elsewhere.
pub fn data_consistency<T: Real>(k_pred: &Tensor<T>, k_meas: &Tensor<T>, mask: &SamplingMask) -> Result<Tensor<T>> {
    check_grid("data_consistency", k_pred, mask)?;
    check_grid("data_consistency", k_meas, mask)?;
    let w = mask.width();
    let mut out = k_pred.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        if mask.columns[i % w] {
            *v = k_meas.data()[i];
        }
    }
    Ok(out)
}
