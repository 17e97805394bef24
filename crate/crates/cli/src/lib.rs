//! Pipeline commands over the core library: synthetic data, speaker graphs,
//! anchors, training, evaluation, ablation and group transferability.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use artifacts::Context;
pub use commands::{
    cmd_ablate, cmd_all, cmd_anchors, cmd_eval, cmd_graph, cmd_synth, cmd_train, cmd_transfer,
};
pub use config::{Overrides, PipelineConfig};
pub use error::CliError;
