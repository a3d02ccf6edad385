//! Dual-domain unified MRI reconstruction core.
//!
//! This crate is `no_std` (it needs `alloc`) and holds everything that is
//! pure computation:
//!
//! * [`diff`]: dense tensors, a define-by-run tape with reverse-mode
//!   gradients, and a central finite-difference checker.
//! * [`mri`]: centered orthonormal 2D FFT, 1D Cartesian undersampling masks,
//!   hard data consistency, paired-contrast phantoms and reference
//!   degradation.
//! * [`nn`]: the block zoo (DRDB, windowed self-attention, STL, XBB, RSTB,
//!   SE) and the global-feature-fusion backbone.
//! * [`model`]: the partially shared encoder, reference fusion, the image and
//!   k-space networks, and the recurrent dual-domain pipeline.
//! * [`train`]: dual-domain loss, Adam, PSNR/SSIM, the training loop and the
//!   held-out evaluator.
//! * [`suites`]: the finite-difference gradient suites shared by the CLI and
//!   the test targets.
//!
//! File formats, configuration parsing and the command line live in the
//! companion `dudo` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod diff;
pub mod error;
pub mod model;
pub mod mri;
pub mod nn;
pub mod real;
pub mod suites;
pub mod train;

pub use diff::{Graph, ParamStore, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use real::{DType, Real};
