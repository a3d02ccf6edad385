//! File formats, JSON configuration and the `dudo` command line on top of
//! [`dudo_core`].

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod tensor_io;

pub use config::RunConfig;
pub use error::{CliError, CliResult};

use dudo_core::train::TrainConfig;

/// Learning rate of the desk-scale runs. The full-size default of 1e-4
/// barely moves a 27k-parameter model in 500 steps.
pub const TOY_LR: f64 = 1e-3;

/// Training settings for 500-step runs on 32×32 phantoms.
pub fn toy_train_config() -> TrainConfig {
    TrainConfig { lr: TOY_LR, steps: 500, image_size: 32, ..TrainConfig::default() }
}
