//! Anonymized, columnar dataset exports.
//!
//! Every export is a flat table of strings keyed by voter pseudonym where
//! voters appear. Rationals are written twice, as an exact fraction and as a
//! six-place decimal; timestamps are ISO-8601 UTC with millisecond precision.
//! Rows are sorted so that equal states export byte-identical files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::SecondsFormat;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::consistency::ConsistencyReport;
use crate::engine::{
    Actor, CampaignStatus, EngineError, EngineResult, EngineState, Platform, ResultSet, Timestamp,
};
use crate::ids::CampaignId;
use crate::rational::{to_decimal_string, to_fraction_string, Rational};

pub const EXPORT_SCHEMA_VERSION: u32 = 1;
pub const DECIMAL_PLACES: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportKind {
    Ballots,
    Traces,
    Results,
    Feedback,
    Consistency,
}

impl ExportKind {
    pub const ALL: [ExportKind; 5] = [
        ExportKind::Ballots,
        ExportKind::Traces,
        ExportKind::Results,
        ExportKind::Feedback,
        ExportKind::Consistency,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExportKind::Ballots => "ballots",
            ExportKind::Traces => "traces",
            ExportKind::Results => "results",
            ExportKind::Feedback => "feedback",
            ExportKind::Consistency => "consistency",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            ExportKind::Ballots => &[
                "voter_pseudonym",
                "campaign_id",
                "question_id",
                "method",
                "ballot_id",
                "revision_count",
                "received_at",
                "options",
                "scores_exact",
                "scores_decimal",
            ],
            ExportKind::Traces => &[
                "voter_pseudonym",
                "campaign_id",
                "question_id",
                "method",
                "ballot_id",
                "ballot_opened_at",
                "first_interaction_at",
                "submitted_at",
                "duration_ms",
                "change_count",
                "in_form_changes",
                "revision_count",
            ],
            ExportKind::Results => &[
                "campaign_id",
                "interim",
                "question_id",
                "method",
                "option_id",
                "rank",
                "aggregate_exact",
                "aggregate_decimal",
                "share_exact",
                "share_decimal",
                "counted_ballots",
            ],
            ExportKind::Feedback => &[
                "voter_pseudonym",
                "campaign_id",
                "question_id",
                "rating",
                "text",
                "created_at",
                "submission_count",
            ],
            ExportKind::Consistency => &[
                "question_id",
                "rank",
                "consistency",
                "mean",
                "consistency_exact",
                "mean_exact",
            ],
        }
    }
}

impl fmt::Display for ExportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExportKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExportKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown export kind {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(format!("unknown format {other:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed export: {0}")]
    Schema(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportTable {
    pub schema_version: u32,
    pub campaign_id: CampaignId,
    pub kind: ExportKind,
    pub interim: bool,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn exact(r: &Rational) -> String {
    to_fraction_string(r)
}

fn decimal(r: &Rational) -> String {
    to_decimal_string(r, DECIMAL_PLACES)
}

fn joined(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(" ")
}

impl ExportTable {
    fn new(campaign_id: CampaignId, kind: ExportKind, interim: bool) -> Self {
        Self {
            schema_version: EXPORT_SCHEMA_VERSION,
            campaign_id,
            kind,
            interim,
            columns: kind.columns().iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Value of `name` in row `row`.
    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        let col = self.column(name)?;
        self.rows.get(row).map(|r| r[col].as_str())
    }

    pub fn to_csv(&self) -> Result<String, ExportError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| ExportError::Io(e.into_error()))?;
        String::from_utf8(bytes).map_err(|e| ExportError::Schema(e.to_string()))
    }

    pub fn to_json_value(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, v)| (c.clone(), Value::String(v.clone())))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "schema_version": self.schema_version,
            "campaign_id": self.campaign_id,
            "kind": self.kind,
            "interim": self.interim,
            "columns": self.columns,
            "rows": rows,
        })
    }

    pub fn to_json(&self) -> Result<String, ExportError> {
        Ok(serde_json::to_string_pretty(&self.to_json_value())?)
    }

    pub fn render(&self, format: ExportFormat) -> Result<String, ExportError> {
        match format {
            ExportFormat::Csv => self.to_csv(),
            ExportFormat::Json => self.to_json(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ExportError> {
        #[derive(Deserialize)]
        struct Doc {
            schema_version: u32,
            campaign_id: CampaignId,
            kind: ExportKind,
            interim: bool,
            columns: Vec<String>,
            rows: Vec<Map<String, Value>>,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.schema_version != EXPORT_SCHEMA_VERSION {
            return Err(ExportError::Schema(format!(
                "unsupported schema_version {}",
                doc.schema_version
            )));
        }
        let mut rows = Vec::with_capacity(doc.rows.len());
        for (i, obj) in doc.rows.iter().enumerate() {
            if obj.len() != doc.columns.len() {
                return Err(ExportError::Schema(format!("row {i} has {} fields", obj.len())));
            }
            let row = doc
                .columns
                .iter()
                .map(|c| match obj.get(c) {
                    Some(Value::String(s)) => Ok(s.clone()),
                    _ => Err(ExportError::Schema(format!("row {i} lacks string field {c}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        Ok(Self {
            schema_version: doc.schema_version,
            campaign_id: doc.campaign_id,
            kind: doc.kind,
            interim: doc.interim,
            columns: doc.columns,
            rows,
        })
    }

    /// Parses a CSV export of `kind`, checking the header against the schema.
    pub fn from_csv(
        campaign_id: CampaignId,
        kind: ExportKind,
        interim: bool,
        text: &str,
    ) -> Result<Self, ExportError> {
        let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != kind.columns() {
            return Err(ExportError::Schema(format!("unexpected header {header:?} for {kind}")));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(Self {
            schema_version: EXPORT_SCHEMA_VERSION,
            campaign_id,
            kind,
            interim,
            columns: header,
            rows,
        })
    }

    pub fn file_name(&self, format: ExportFormat) -> String {
        format!("{}-{}.{}", self.campaign_id, self.kind, format.extension())
    }

    /// Writes the table into `dir` and returns the file path.
    pub fn write_to(&self, dir: &Path, format: ExportFormat) -> Result<PathBuf, ExportError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(self.file_name(format));
        fs::write(&path, self.render(format)?)?;
        Ok(path)
    }
}

fn ballot_rows(state: &EngineState, campaign_id: &CampaignId, traces: bool) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = state
        .ballots_for(campaign_id)
        .map(|b| {
            let counted = b.counted();
            let head = vec![
                b.voter_pseudonym.to_string(),
                b.campaign_id.to_string(),
                b.question_id.to_string(),
                b.method.to_string(),
                b.ballot_id.to_string(),
            ];
            let question = state
                .campaign(campaign_id)
                .and_then(|c| c.question(&b.question_id));
            let tail = if traces {
                vec![
                    timestamp(&b.trace.ballot_opened_at),
                    timestamp(&b.trace.first_interaction_at),
                    timestamp(&b.trace.submitted_at),
                    b.trace.duration_ms.to_string(),
                    b.trace.change_count.to_string(),
                    b.trace.in_form_changes.to_string(),
                    b.revisions.len().to_string(),
                ]
            } else {
                vec![
                    b.revisions.len().to_string(),
                    timestamp(&counted.received_at),
                    joined(question.map(|q| q.option_ids().iter().map(|o| o.to_string()).collect::<Vec<_>>()).unwrap_or_default()),
                    joined(counted.scores.scores.iter().map(exact)),
                    joined(counted.scores.scores.iter().map(decimal)),
                ]
            };
            head.into_iter().chain(tail).collect()
        })
        .collect();
    rows.sort();
    rows
}

fn results_rows(results: &ResultSet) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for t in &results.tallies {
        for (i, option) in t.options.iter().enumerate() {
            let rank = t
                .ranking
                .iter()
                .position(|g| g.contains(option))
                .map(|p| p + 1)
                .unwrap_or(0);
            let share = t.shares.as_ref().map(|s| s[i]);
            rows.push(vec![
                results.campaign_id.to_string(),
                results.interim.to_string(),
                t.question_id.to_string(),
                t.method.to_string(),
                option.to_string(),
                rank.to_string(),
                exact(&t.aggregates[i]),
                decimal(&t.aggregates[i]),
                share.as_ref().map(exact).unwrap_or_default(),
                share.as_ref().map(decimal).unwrap_or_default(),
                t.counted_ballots.to_string(),
            ]);
        }
    }
    rows
}

/// The results table for an already computed result set.
pub fn results_table(results: &ResultSet) -> ExportTable {
    let mut table = ExportTable::new(results.campaign_id.clone(), ExportKind::Results, results.interim);
    table.rows = results_rows(results);
    table
}

/// Rows of the consistency table, one per (question, rank).
pub fn consistency_rows(reports: &[ConsistencyReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for r in reports {
        for (k, c) in r.per_rank.iter().enumerate() {
            rows.push(vec![
                r.question_id.to_string(),
                (k + 1).to_string(),
                decimal(c),
                decimal(&r.mean),
                exact(c),
                exact(&r.mean),
            ]);
        }
    }
    rows
}

pub fn consistency_table(campaign_id: CampaignId, interim: bool, reports: &[ConsistencyReport]) -> ExportTable {
    let mut table = ExportTable::new(campaign_id, ExportKind::Consistency, interim);
    table.rows = consistency_rows(reports);
    table
}

fn feedback_rows(state: &EngineState, campaign_id: &CampaignId) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = state
        .feedback
        .values()
        .filter(|e| &e.current.campaign_id == campaign_id)
        .map(|e| {
            let f = &e.current;
            vec![
                f.voter_pseudonym.to_string(),
                f.campaign_id.to_string(),
                f.question_id.to_string(),
                f.rating.to_string(),
                f.text.clone().unwrap_or_default(),
                timestamp(&f.created_at),
                (e.history.len() + 1).to_string(),
            ]
        })
        .collect();
    rows.sort();
    rows
}

impl Platform {
    /// Exports one dataset of a campaign the actor manages. Final exports
    /// need a tallied campaign; `interim` exports recompute results now.
    pub fn export(
        &self,
        actor: &Actor,
        campaign_id: &CampaignId,
        kind: ExportKind,
        interim: bool,
        now: Timestamp,
    ) -> EngineResult<ExportTable> {
        self.read(|state| {
            let campaign = Platform::managed(state, actor, campaign_id)?;
            let results = if interim {
                if campaign.status == CampaignStatus::Draft {
                    return Err(EngineError::CampaignDraft(campaign_id.clone()));
                }
                state.compute_results(campaign, now, true)?
            } else {
                state
                    .results
                    .get(campaign_id)
                    .cloned()
                    .ok_or_else(|| EngineError::ResultsNotReady(campaign_id.clone()))?
            };
            let mut table = ExportTable::new(campaign_id.clone(), kind, interim);
            table.rows = match kind {
                ExportKind::Ballots => ballot_rows(state, campaign_id, false),
                ExportKind::Traces => ballot_rows(state, campaign_id, true),
                ExportKind::Results => results_rows(&results),
                ExportKind::Feedback => feedback_rows(state, campaign_id),
                ExportKind::Consistency => consistency_rows(&results.consistency),
            };
            Ok(table)
        })
    }
}
