//! Command-line entry points, run configuration, and manifests.

mod commands;
mod config;
mod manifest;

pub use commands::{cmd_contour, cmd_eval, cmd_generate, cmd_sweep, cmd_train, SweepKind};
pub use config::{DataMode, RunConfig};
pub use manifest::{sha256_file, RunManifest};
