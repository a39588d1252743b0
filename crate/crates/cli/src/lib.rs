//! Configuration ingestion, command dispatch and CSV emission for the
//! `gisc` binary.

pub mod commands;
pub mod config;
pub mod emit;

use std::path::PathBuf;

pub use commands::{run_command, CliError, Command, Outcome, RunOptions};
pub use config::{ConfigErrors, RawConfig, StudyConfig};

/// Reads the configuration file and applies `--set` overrides.
pub fn load_config(path: &std::path::Path, overrides: &[String]) -> Result<StudyConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: PathBuf::from(path),
        source,
    })?;
    let mut raw = RawConfig::parse(&text)?;
    let mut errors = Vec::new();
    for s in overrides {
        if let Err(e) = raw.set(s) {
            errors.push(e);
        }
    }
    match StudyConfig::from_raw(&raw) {
        Ok(cfg) if errors.is_empty() => Ok(cfg),
        Ok(_) => Err(ConfigErrors(errors).into()),
        Err(ConfigErrors(more)) => {
            errors.extend(more);
            Err(ConfigErrors(errors).into())
        }
    }
}
