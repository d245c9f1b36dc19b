//! Command-line driver: reads a JSON experiment config, runs one of the
//! experiments and writes CSV artifacts.

pub mod commands;
pub mod config;
pub mod table;

use std::path::{Path, PathBuf};

use config::{Command, ExperimentConfig};
use table::{Artifact, Stamp};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(_) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

impl From<otng::Error> for CliError {
    fn from(e: otng::Error) -> Self {
        Self::Numerical(e.to_string())
    }
}

/// Loads a config file and applies the command-line overrides.
pub fn load_config(command: Command, path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut config = ExperimentConfig::parse(&text)?;
    if let Some(c) = config.command {
        if c != command {
            return Err(CliError::Config(format!("config is for `{}`, not `{}`", c.name(), command.name())));
        }
    }
    config.command = Some(command);
    if seed.is_some() {
        config.seed = seed;
    }
    Ok(config)
}

/// Runs `command` on an already loaded config and returns its artifacts.
pub fn artifacts(command: Command, config: &ExperimentConfig) -> Result<Vec<Artifact>, CliError> {
    Ok(match command {
        Command::Fit => commands::run_fit(config)?.artifacts,
        Command::Compare => commands::run_compare(config)?.artifacts,
        Command::Geodesic => commands::run_geodesic(config)?.artifacts,
        Command::Metric => commands::run_metric(config)?.artifacts,
    })
}

/// Full pipeline behind the binary. `out` overrides the config's `output`,
/// which defaults to the working directory.
pub fn execute(command: Command, config_path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    let config = load_config(command, config_path, seed)?;
    let dir = out.map(Path::to_path_buf).or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("."));
    let produced = artifacts(command, &config)?;
    std::fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let stamp = Stamp::new(&config.canonical(), config.seed);
    produced.iter().map(|a| a.write(&dir, &stamp)).collect()
}
