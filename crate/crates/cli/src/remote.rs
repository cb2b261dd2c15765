use std::time::Duration;

use reqwest::blocking::{Client, RequestBuilder, Response};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;

use votelab_core::engine::{Campaign, ResultSet, StateReport, Timestamp};
use votelab_core::export::{ExportKind, ExportTable};
use votelab_core::fixture::SeedReport;
use votelab_core::ids::CampaignId;

use crate::backend::Backend;
use crate::error::CliError;

/// Talks to a running votelab API server with an admin token.
pub struct Remote {
    base: String,
    token: Option<String>,
    client: Client,
}

#[derive(Deserialize)]
struct Problem {
    #[serde(default)]
    code: String,
    #[serde(default)]
    message: String,
}

#[derive(Deserialize)]
struct Tallied {
    tallied: Vec<CampaignId>,
}

impl Remote {
    pub fn new(base: &str, token: Option<String>) -> Result<Self, CliError> {
        let client = Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| CliError::Http(e.to_string()))?;
        Ok(Self {
            base: base.trim_end_matches('/').to_string(),
            token,
            client,
        })
    }

    fn url(&self, path: &str) -> String {
        format!("{}/v1{}", self.base, path)
    }

    fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T, CliError> {
        let req = match &self.token {
            Some(t) => req.bearer_auth(t),
            None => req,
        };
        let resp = req.send().map_err(|e| CliError::Http(e.to_string()))?;
        Self::decode(resp)
    }

    fn decode<T: DeserializeOwned>(resp: Response) -> Result<T, CliError> {
        let status = resp.status();
        let body = resp.text().map_err(|e| CliError::Http(e.to_string()))?;
        if status.is_success() {
            return Ok(serde_json::from_str(&body)?);
        }
        let problem: Problem = serde_json::from_str(&body).unwrap_or(Problem {
            code: String::new(),
            message: body,
        });
        Err(CliError::Api {
            status: status.as_u16(),
            code: if problem.code.is_empty() {
                status.canonical_reason().unwrap_or("HttpError").to_string()
            } else {
                problem.code
            },
            detail: problem.message,
        })
    }
}

impl Backend for Remote {
    fn seed_covid(&self, seed: u64, voters: usize) -> Result<SeedReport, CliError> {
        self.send(
            self.client
                .post(self.url("/admin/fixtures/covid"))
                .json(&json!({ "seed": seed, "voters": voters })),
        )
    }

    fn tick(&self, now: Timestamp) -> Result<Vec<CampaignId>, CliError> {
        let out: Tallied = self.send(
            self.client
                .post(self.url("/admin/scheduler/tick"))
                .json(&json!({ "at": now })),
        )?;
        Ok(out.tallied)
    }

    fn campaigns(&self) -> Result<Vec<Campaign>, CliError> {
        self.send(self.client.get(self.url("/campaigns")))
    }

    fn final_results(&self, campaign: &CampaignId) -> Result<ResultSet, CliError> {
        self.send(self.client.get(self.url(&format!("/campaigns/{campaign}/results"))))
    }

    fn interim_results(&self, campaign: &CampaignId, now: Timestamp) -> Result<ResultSet, CliError> {
        self.send(
            self.client
                .get(self.url(&format!("/campaigns/{campaign}/results")))
                .query(&[("interim", "true".to_string()), ("at", now.to_rfc3339())]),
        )
    }

    fn export(
        &self,
        campaign: &CampaignId,
        kind: ExportKind,
        interim: bool,
        now: Timestamp,
    ) -> Result<ExportTable, CliError> {
        let value: serde_json::Value = self.send(
            self.client
                .get(self.url(&format!("/campaigns/{campaign}/export/{kind}")))
                .query(&[
                    ("interim", interim.to_string()),
                    ("at", now.to_rfc3339()),
                    ("format", "json".to_string()),
                ]),
        )?;
        Ok(ExportTable::from_json(&value.to_string())?)
    }

    fn state(&self) -> Result<StateReport, CliError> {
        self.send(self.client.get(self.url("/admin/state")))
    }
}
