//! Command implementations behind the `invopt` binary.

pub mod commands;
pub mod manifest;
pub mod output;

pub use commands::{cmd_run, cmd_sweep, cmd_validate, evaluate, RunOptions, SweepParam};
pub use manifest::{parse_manifest, read_manifest, Entry, RunManifest, Verify};
pub use output::Summary;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("manifest: {0}")]
    Parse(String),
    #[error(transparent)]
    Core(#[from] invopt_core::Error),
    #[error("io: {0}")]
    Io(String),
}
