use votelab_core::engine::{Actor, Campaign, EngineConfig, Platform, ResultSet, StateReport, Timestamp};
use votelab_core::export::{ExportKind, ExportTable};
use votelab_core::fixture::{self, SeedReport};
use votelab_core::ids::CampaignId;
use votelab_core::store;

use crate::error::CliError;

/// What the CLI needs from a votelab deployment, whether it is a store opened
/// in-process or a running API server.
pub trait Backend {
    fn seed_covid(&self, seed: u64, voters: usize) -> Result<SeedReport, CliError>;
    fn tick(&self, now: Timestamp) -> Result<Vec<CampaignId>, CliError>;
    fn campaigns(&self) -> Result<Vec<Campaign>, CliError>;
    fn final_results(&self, campaign: &CampaignId) -> Result<ResultSet, CliError>;
    fn interim_results(&self, campaign: &CampaignId, now: Timestamp) -> Result<ResultSet, CliError>;
    fn export(
        &self,
        campaign: &CampaignId,
        kind: ExportKind,
        interim: bool,
        now: Timestamp,
    ) -> Result<ExportTable, CliError>;
    fn state(&self) -> Result<StateReport, CliError>;
}

/// A platform over a local store, acting as admin.
pub struct Embedded {
    platform: Platform,
}

impl Embedded {
    pub fn open(location: &str, config: EngineConfig) -> Result<Self, CliError> {
        let store = store::open_store(location)?;
        Ok(Self {
            platform: Platform::open(store, config)?,
        })
    }

    /// Removes whatever events a store location holds.
    pub fn reset(location: &str) -> Result<(), CliError> {
        if location == "memory:" {
            return Ok(());
        }
        if let Some(path) = location.strip_prefix("sqlite:") {
            let path = std::path::Path::new(path.strip_prefix("//").unwrap_or(path));
            if path.exists() {
                std::fs::remove_file(path)?;
            }
            return Ok(());
        }
        let dir = location.strip_prefix("file:").unwrap_or(location);
        store::FileEventStore::reset(std::path::Path::new(dir))?;
        Ok(())
    }

    pub fn platform(&self) -> &Platform {
        &self.platform
    }
}

impl Backend for Embedded {
    fn seed_covid(&self, seed: u64, voters: usize) -> Result<SeedReport, CliError> {
        Ok(fixture::seed_covid(&self.platform, seed, voters)?)
    }

    fn tick(&self, now: Timestamp) -> Result<Vec<CampaignId>, CliError> {
        Ok(self.platform.scheduler_tick(now))
    }

    fn campaigns(&self) -> Result<Vec<Campaign>, CliError> {
        Ok(self.platform.campaigns(&Actor::Admin))
    }

    fn final_results(&self, campaign: &CampaignId) -> Result<ResultSet, CliError> {
        Ok(self.platform.get_results(&Actor::Admin, campaign)?)
    }

    fn interim_results(&self, campaign: &CampaignId, now: Timestamp) -> Result<ResultSet, CliError> {
        Ok(self.platform.on_demand_results(&Actor::Admin, campaign, now)?)
    }

    fn export(
        &self,
        campaign: &CampaignId,
        kind: ExportKind,
        interim: bool,
        now: Timestamp,
    ) -> Result<ExportTable, CliError> {
        Ok(self.platform.export(&Actor::Admin, campaign, kind, interim, now)?)
    }

    fn state(&self) -> Result<StateReport, CliError> {
        Ok(self.platform.state_report()?)
    }
}
