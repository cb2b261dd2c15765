use serde::{Deserialize, Serialize};

use crate::ballot::MethodParams;

/// Engine settings, usually read from the `[engine]` table of a config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Defaults for campaigns that do not set their own QV / cumulative limits.
    pub method_params: MethodParams,
    /// How far client trace timestamps may lie outside the session window.
    pub clock_skew_secs: i64,
    /// Write a snapshot after this many events.
    pub snapshot_every: u64,
    pub scheduler_period_secs: u64,
    /// Secret mixed into email hashes.
    pub identity_pepper: String,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            method_params: MethodParams::default(),
            clock_skew_secs: 300,
            snapshot_every: 1000,
            scheduler_period_secs: 10,
            identity_pepper: String::new(),
        }
    }
}
