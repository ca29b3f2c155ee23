//! Service configuration: a TOML file with environment overrides.

use std::path::{Path, PathBuf};

use emotrail_core::aggregate::MapStyle;
use emotrail_core::affect::ScoringConfig;
use emotrail_core::catalog::{Catalog, CatalogError};
use emotrail_core::postcard::PostcardStyle;
use serde::Deserialize;
use thiserror::Error;

pub const ENV_BIND: &str = "EMOTRAIL_BIND";
pub const ENV_STORE: &str = "EMOTRAIL_STORE";
pub const ENV_CATALOG: &str = "EMOTRAIL_CATALOG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid scoring config: {0}")]
    Scoring(String),
    #[error("catalog: {0}")]
    Catalog(#[from] CatalogError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub store: PathBuf,
    /// Catalog TOML; the bundled catalog when unset.
    pub catalog: Option<PathBuf>,
    pub scoring: ScoringConfig,
    pub postcard: PostcardStyle,
    pub emotion_map: MapStyle,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1:8080".into(),
            store: PathBuf::from("emotrail-store"),
            catalog: None,
            scoring: ScoringConfig::default(),
            postcard: PostcardStyle::default(),
            emotion_map: MapStyle::default(),
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.scoring.validate().map_err(ConfigError::Scoring)?;
        Ok(config)
    }

    /// Reads `path` if given, then applies process environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                Config::parse(&text)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok());
        Ok(config)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_BIND) {
            self.bind = v;
        }
        if let Some(v) = get(ENV_STORE) {
            self.store = v.into();
        }
        if let Some(v) = get(ENV_CATALOG) {
            self.catalog = Some(v.into());
        }
    }

    pub fn load_catalog(&self) -> Result<Catalog, ConfigError> {
        match &self.catalog {
            Some(p) => {
                let bytes = std::fs::read(p).map_err(|source| ConfigError::Read {
                    path: p.display().to_string(),
                    source,
                })?;
                Ok(Catalog::load(&bytes)?)
            }
            None => Ok(Catalog::bundled()),
        }
    }
}
