//! Experiment runner around the simulator core: configuration, output
//! artifacts, and the gen/train/eval/sweep/render/sizecalc subcommands.

pub mod commands;
pub mod config;
pub mod render;
pub mod trajectory;

pub use commands::{
    cmd_eval, cmd_gen, cmd_render, cmd_sizecalc, cmd_sweep, cmd_train, TrainArtifacts,
};
pub use config::RunConfig;
