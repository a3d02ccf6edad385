//! Seeded stream of simulated training and evaluation problems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff::Tensor;
use crate::error::{Error, Result};
use crate::model::ModelInput;
use crate::mri::{degrade_reference, fft2c, gen_phantom_pair, ifft2c, make_cartesian_mask, undersample, RefQuality};
use crate::real::Real;

/// Phantom seeds at or above this value are reserved for evaluation.
pub const EVAL_SEED_BASE: u64 = 1 << 62;

/// Everything needed to rebuild one problem bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDesc {
    pub phantom_seed: u64,
    pub accel: f64,
    pub quality: RefQuality,
}

impl SampleDesc {
    /// Little-endian byte encoding used for stream hashing.
    pub fn to_bytes(&self) -> [u8; 17] {
        let mut b = [0u8; 17];
        b[..8].copy_from_slice(&self.phantom_seed.to_le_bytes());
        b[8..16].copy_from_slice(&self.accel.to_bits().to_le_bytes());
        b[16] = match self.quality {
            RefQuality::Hq => 0,
            RefQuality::Lq => 1,
            RefQuality::Absent => 2,
        };
        b
    }
}

/// A simulated problem with its ground truth.
#[derive(Debug, Clone)]
pub struct Sample<T> {
    pub desc: SampleDesc,
    pub input: ModelInput<T>,
    pub i_gt: Tensor<T>,
    pub k_gt: Tensor<T>,
}

/// Builds the problem described by `desc` at `size`×`size`: contrast A is
/// the target, contrast B the reference, and the same seed drives the
/// phantom, the mask and the LQ degradation. The ground-truth image is the
/// inverse transform of the fully sampled k-space, so a fully sampled
/// reconstruction reproduces it bit for bit.
pub fn materialize<T: Real>(desc: &SampleDesc, size: usize, acs_frac: f64) -> Result<Sample<T>> {
    let pair = gen_phantom_pair::<T>(size, desc.phantom_seed)?;
    let mask = make_cartesian_mask(size, size, desc.accel, acs_frac, desc.phantom_seed)?;
    let k_gt = fft2c(&pair.contrast_a)?;
    let i_gt = ifft2c(&k_gt)?;
    let k_sub = undersample(&k_gt, &mask)?;
    let (i_ref, ac) = degrade_reference(&pair.contrast_b, desc.quality, desc.phantom_seed)?;
    Ok(Sample {
        desc: *desc,
        input: ModelInput { k_sub, mask, i_ref, ac },
        i_gt,
        k_gt,
    })
}

/// Training descriptors: phantom seeds below [`EVAL_SEED_BASE`], accel
/// uniform on `accel_range`, reference quality drawn with `ref_probs`
/// over (HQ, LQ, absent).
pub fn training_stream(seed: u64, steps: usize, accel_range: [f64; 2], ref_probs: [f64; 3]) -> Result<alloc::vec::Vec<SampleDesc>> {
    let total: f64 = ref_probs.iter().sum();
    if ref_probs.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid("training_stream", "reference probabilities must sum to 1"));
    }
    if !(accel_range[0] >= 1.0 && accel_range[0] <= accel_range[1]) {
        return Err(Error::invalid("training_stream", "acceleration range must satisfy 1 <= lo <= hi"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..steps)
        .map(|_| {
            let phantom_seed = rng.random::<u64>() >> 2;
            let accel = if accel_range[0] == accel_range[1] {
                accel_range[0]
            } else {
                rng.random_range(accel_range[0]..accel_range[1])
            };
            let u: f64 = rng.random();
            let quality = if u < ref_probs[0] {
                RefQuality::Hq
            } else if u < ref_probs[0] + ref_probs[1] {
                RefQuality::Lq
            } else {
                RefQuality::Absent
            };
            SampleDesc { phantom_seed, accel, quality }
        })
        .collect())
}

/// Phantom seed of held-out case `i` for an evaluation starting at `base`.
pub fn eval_seed(base: u64, i: usize) -> Result<u64> {
    if base < EVAL_SEED_BASE {
        return Err(Error::SeedOverlap);
    }
    base.checked_add(i as u64).ok_or(Error::SeedOverlap)
}
