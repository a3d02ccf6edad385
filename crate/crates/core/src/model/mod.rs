//! Full reconstruction model: shallow encoders, feature fusion, the two
//! domain networks and the recurrent pipeline.

mod config;
mod fusion;
mod inet;
mod knet;
mod pass;
mod recurrent;
pub mod suites;


pub use config::{Encoder, Fusion, Layout, ModelConfig};
pub use fusion::{C2fAttention, FeatureFusion};
pub use inet::{Cb5, IUniNeXt};
pub use knet::KNeXt;
pub use pass::ShallowEncoder;
pub use recurrent::{DuDoUniNeXt, Intermediate, ModelInput, ModelOutput};
