//! Configuration loading and subcommands of the `beamctl` tool.

// `!(x > 0.0)` style guards reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use commands::{run, Command};
pub use config::{parse_config, parse_str, ConfigError, Resolved, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] beamctl_core::Error),
    #[error("cannot write {path}: {message}")]
    Io { path: PathBuf, message: String },
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }

    /// 2 for configuration and usage problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

/// Loads `config`, runs `cmd` and returns the written files.
pub fn execute(cmd: Command, config: &Path, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let resolved = parse_config(config)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| resolved.out_dir());
    let mut sink = output::Sink::new(dir, resolved.prefix())?;
    run(cmd, &resolved, &mut sink)?;
    Ok(sink.written().to_vec())
}
