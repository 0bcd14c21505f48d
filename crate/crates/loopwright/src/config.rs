//! TOML configuration files.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use loopwright_core::experiment::ExperimentConfig;
use loopwright_core::model::RegistryError;
use loopwright_core::ModelRegistry;

use crate::service::ServiceConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{path}: {source}")]
    Registry { path: PathBuf, source: RegistryError },
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, ConfigFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigFileError::Io { path: path.into(), source })?;
    toml::from_str(&text).map_err(|source| ConfigFileError::Parse { path: path.into(), source })
}

/// `[[model]]` tables, one per registry entry.
pub fn load_registry(path: &Path) -> Result<ModelRegistry, ConfigFileError> {
    let registry: ModelRegistry = load(path)?;
    registry.validate().map_err(|source| ConfigFileError::Registry { path: path.into(), source })?;
    Ok(registry)
}

pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, ConfigFileError> {
    load(path)
}

/// `[[token]]` tables plus lease settings.
pub fn load_service(path: &Path) -> Result<ServiceConfig, ConfigFileError> {
    load(path)
}
