//! K-space physics and data simulation.

pub mod fft;
mod mask;
mod phantom;
mod reference;

pub use fft::{fft2c, ifft2c};
pub use mask::{acs_count, acs_start, data_consistency, make_cartesian_mask, sampled_count, undersample, SamplingMask};
pub use phantom::{gen_phantom_pair, magnitude, support, PhantomPair};
pub use reference::{degrade_reference, AvailabilityCondition, RefQuality, LQ_ACCEL};

/// ACS fraction used for every mask in this crate's pipelines.
pub const ACS_FRAC: f64 = 0.125;

/// Zero-filled reconstruction `ifft2c(undersample(fft2c(x), mask))`.
pub fn zero_filled<T: crate::Real>(image: &crate::Tensor<T>, mask: &SamplingMask) -> crate::Result<crate::Tensor<T>> {
    ifft2c(&undersample(&fft2c(image)?, mask)?)
}
