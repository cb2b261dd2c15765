use std::path::Path;

use serde::Deserialize;
use votelab_core::engine::EngineConfig;

use crate::error::CliError;

pub const DEFAULT_STORE: &str = "./votelab-data";

/// The parts of a votelab TOML config file the CLI cares about. The server
/// reads the same file and ignores these keys' siblings it does not know.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub store: Option<String>,
    pub api_url: Option<String>,
    pub api_token: Option<String>,
    pub engine: EngineConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}
