//! The block zoo and the global-feature-fusion backbone.

mod attention;
mod backbone;
mod drdb;
mod layers;
mod se;
mod xbb;

#[cfg(test)]
mod tests;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

pub use attention::{partition_index, merge_index, Stl, WindowAttention};
pub use backbone::{Backbone, BackboneVariant, Block, BlockKind, XbbConfig};
pub use drdb::{dilation_schedule, Drdb};
pub use layers::{Conv, ConvBlock, Dense, LayerNorm};
pub use se::Se;
pub use xbb::{xtl_width, BlockOutput, Rstb, Xbb};

use crate::diff::ParamSpec;

/// Dotted parameter name `prefix.name`, or `name` alone for an empty prefix.
pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.into()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Anything that declares learnable tensors.
pub trait Module {
    fn specs(&self, out: &mut Vec<ParamSpec>);

    fn param_specs(&self) -> Vec<ParamSpec> {
        let mut v = Vec::new();
        self.specs(&mut v);
        v
    }

    /// Learnable scalars, counting shared names once.
    fn count_params(&self) -> usize {
        count_unique(&self.param_specs())
    }
}

pub fn count_unique(specs: &[ParamSpec]) -> usize {
    let mut seen = BTreeSet::new();
    specs
        .iter()
        .filter(|s| seen.insert(s.name.as_str()))
        .map(ParamSpec::numel)
        .sum()
}
