//! Minimal differentiable numerical core.

mod check;
mod graph;
pub mod kernels;
mod params;
mod tape;
mod tensor;

pub use check::{finite_diff_check, CheckOptions, CheckReport, ParamCheck};
pub use graph::Graph;
pub use params::{Init, ParamSpec, ParamStore};
pub use tape::{Activation, Tape, Var, GATHER_ZERO};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
