//! Reference-contrast availability and degradation.

use super::fft::{fft2c, ifft2c};
use super::mask::{make_cartesian_mask, undersample};
use super::ACS_FRAC;
use crate::diff::Tensor;
use crate::error::Result;
use crate::real::Real;

/// Acceleration used to produce a low-quality reference.
pub const LQ_ACCEL: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RefQuality {
    Absent,
    Lq,
    Hq,
}

impl RefQuality {
    pub const ALL: [RefQuality; 3] = [RefQuality::Hq, RefQuality::Lq, RefQuality::Absent];

    pub fn as_str(self) -> &'static str {
        match self {
            RefQuality::Absent => "absent",
            RefQuality::Lq => "LQ",
            RefQuality::Hq => "HQ",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "absent" | "Absent" | "none" => Some(RefQuality::Absent),
            "LQ" | "lq" => Some(RefQuality::Lq),
            "HQ" | "hq" => Some(RefQuality::Hq),
            _ => None,
        }
    }
}

impl core::fmt::Display for RefQuality {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether a reference is present (`value == 1`) and at what quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AvailabilityCondition {
    pub value: u8,
    pub quality: RefQuality,
}

impl AvailabilityCondition {
    pub fn from_quality(quality: RefQuality) -> Self {
        AvailabilityCondition {
            value: u8::from(quality != RefQuality::Absent),
            quality,
        }
    }

    pub fn available(&self) -> bool {
        self.value == 1
    }
}

/// Produces the reference seen by the network for a given quality: HQ is
/// the clean contrast, LQ a 2× zero-filled undersampling of it, absent a
/// black image.
pub fn degrade_reference<T: Real>(
    reference: &Tensor<T>,
    quality: RefQuality,
    seed: u64,
) -> Result<(Tensor<T>, AvailabilityCondition)> {
    let ac = AvailabilityCondition::from_quality(quality);
    let out = match quality {
        RefQuality::Hq => reference.clone(),
        RefQuality::Absent => Tensor::zeros(reference.shape()),
        RefQuality::Lq => {
            let s = reference.shape();
            let mask = make_cartesian_mask(s[2], s[1], LQ_ACCEL, ACS_FRAC, seed)?;
            ifft2c(&undersample(&fft2c(reference)?, &mask)?)?
        }
    };
    Ok((out, ac))
}
