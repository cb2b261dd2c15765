use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::ballot::{MethodId, MethodParams, Question, ScoreVector, TallyResult};
use crate::consistency::ConsistencyReport;
use crate::ids::{BallotId, CampaignId, OptionId, Pseudonym, QuestionId};

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    Draft,
    Open,
    Closed,
    Tallied,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodOrderPolicy {
    #[default]
    Fixed,
    RandomizedPerVoter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Designer,
    Voter,
}

/// Who is calling an engine operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Actor {
    /// Operator with designer rights over every campaign (CLI, admin token).
    Admin,
    Designer(Pseudonym),
    Voter(Pseudonym),
}

impl Actor {
    pub fn can_manage(&self, campaign: &Campaign) -> bool {
        match self {
            Actor::Admin => true,
            Actor::Designer(id) => *id == campaign.designer_id,
            Actor::Voter(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionDefinition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option_id: Option<OptionId>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionDefinition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<QuestionId>,
    pub text: String,
    pub options: Vec<OptionDefinition>,
    pub methods: Vec<MethodId>,
}

pub const DEFINITION_SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    DEFINITION_SCHEMA_VERSION
}

/// The designer-facing JSON document a campaign is created from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignDefinition {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub title: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub open_at: Timestamp,
    pub close_at: Timestamp,
    #[serde(default)]
    pub method_order_policy: MethodOrderPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method_params: Option<MethodParams>,
    /// Keep results unreleased after tallying until the designer releases them.
    #[serde(default)]
    pub hold_results: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order_seed: Option<u64>,
    pub questions: Vec<QuestionDefinition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: CampaignId,
    pub title: String,
    pub designer_id: Pseudonym,
    pub status: CampaignStatus,
    pub open_at: Timestamp,
    pub close_at: Timestamp,
    pub tags: BTreeSet<String>,
    pub questions: Vec<Question>,
    pub method_order_policy: MethodOrderPolicy,
    pub method_params: MethodParams,
    pub parent_campaign_id: Option<CampaignId>,
    pub order_seed: u64,
    pub hold_results: bool,
    pub results_released: bool,
    pub created_at: Timestamp,
    /// Sequence number of the event that last changed who can see this
    /// campaign (opening or tag assignment); drives the pull feed.
    pub published_seq: u64,
}

impl Campaign {
    pub fn question(&self, id: &QuestionId) -> Option<&Question> {
        self.questions.iter().find(|q| &q.question_id == id)
    }

    /// Union of enabled methods in order of first appearance.
    pub fn methods(&self) -> Vec<MethodId> {
        let mut out = Vec::new();
        for q in &self.questions {
            for m in q.method_ids() {
                if !out.contains(&m) {
                    out.push(m);
                }
            }
        }
        out
    }

    pub fn is_accepting(&self, now: Timestamp) -> bool {
        self.status == CampaignStatus::Open && self.open_at <= now && now < self.close_at
    }

    pub fn shares_tag(&self, tags: &BTreeSet<String>) -> bool {
        self.tags.intersection(tags).next().is_some()
    }

    /// Rebuilds the definition document this campaign corresponds to.
    pub fn definition(&self) -> CampaignDefinition {
        CampaignDefinition {
            schema_version: DEFINITION_SCHEMA_VERSION,
            title: self.title.clone(),
            tags: self.tags.clone(),
            open_at: self.open_at,
            close_at: self.close_at,
            method_order_policy: self.method_order_policy,
            method_params: Some(self.method_params),
            hold_results: self.hold_results,
            order_seed: Some(self.order_seed),
            questions: self
                .questions
                .iter()
                .map(|q| QuestionDefinition {
                    question_id: Some(q.question_id.clone()),
                    text: q.text.clone(),
                    options: q
                        .options
                        .iter()
                        .map(|o| OptionDefinition {
                            option_id: Some(o.option_id.clone()),
                            label: o.label.clone(),
                        })
                        .collect(),
                    methods: q.method_ids(),
                })
                .collect(),
        }
    }
}

/// Timing metadata reported by the client with each submission. Stored as
/// behavioral data only; the voting window is gated on server receipt time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientTrace {
    pub ballot_opened_at: Timestamp,
    pub first_interaction_at: Timestamp,
    pub submitted_at: Timestamp,
    /// Edits made inside the form before submitting.
    #[serde(default)]
    pub in_form_changes: u32,
}

/// Per-ballot behavioral summary over all revisions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceTrace {
    pub ballot_opened_at: Timestamp,
    pub first_interaction_at: Timestamp,
    pub submitted_at: Timestamp,
    pub duration_ms: i64,
    /// Revisions after the first plus in-form changes.
    pub change_count: u32,
    pub in_form_changes: u32,
}

impl ChoiceTrace {
    pub fn summarize(revisions: &[Revision]) -> Self {
        let first = &revisions[0].client;
        let last = &revisions[revisions.len() - 1].client;
        let in_form_changes: u32 = revisions.iter().map(|r| r.client.in_form_changes).sum();
        Self {
            ballot_opened_at: first.ballot_opened_at,
            first_interaction_at: first.first_interaction_at,
            submitted_at: last.submitted_at,
            duration_ms: (last.submitted_at - first.ballot_opened_at).num_milliseconds(),
            change_count: (revisions.len() as u32 - 1) + in_form_changes,
            in_form_changes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Revision {
    pub index: u32,
    pub scores: ScoreVector,
    /// Server receipt time.
    pub received_at: Timestamp,
    pub client: ClientTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotRecord {
    pub ballot_id: BallotId,
    pub voter_pseudonym: Pseudonym,
    pub campaign_id: CampaignId,
    pub question_id: QuestionId,
    pub method: MethodId,
    pub revisions: Vec<Revision>,
    pub trace: ChoiceTrace,
}

impl BallotRecord {
    /// The revision that counts: the latest one.
    pub fn counted(&self) -> &Revision {
        self.revisions.last().expect("records hold at least one revision")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotAck {
    pub ballot_id: BallotId,
    pub revision_index: u32,
    /// True when an idempotency key matched an earlier submission.
    pub replayed: bool,
    pub record: BallotRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub voter_pseudonym: Pseudonym,
    pub campaign_id: CampaignId,
    pub question_id: QuestionId,
    pub rating: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub created_at: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub current: FeedbackRecord,
    /// Earlier submissions, oldest first.
    pub history: Vec<FeedbackRecord>,
}

/// Tallies and consistency reports for a whole campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultSet {
    pub campaign_id: CampaignId,
    pub interim: bool,
    pub computed_at: Timestamp,
    pub tallies: Vec<TallyResult>,
    pub consistency: Vec<ConsistencyReport>,
}

impl ResultSet {
    pub fn tally(&self, question: &QuestionId, method: MethodId) -> Option<&TallyResult> {
        self.tallies
            .iter()
            .find(|t| &t.question_id == question && t.method == method)
    }

    pub fn consistency_for(&self, question: &QuestionId) -> Option<&ConsistencyReport> {
        self.consistency.iter().find(|c| &c.question_id == question)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub campaign_id: CampaignId,
    pub title: String,
    pub open_at: Timestamp,
    pub close_at: Timestamp,
    pub tags: BTreeSet<String>,
    pub questions: Vec<Question>,
    pub published_seq: u64,
}

impl From<&Campaign> for CampaignSummary {
    fn from(c: &Campaign) -> Self {
        Self {
            campaign_id: c.campaign_id.clone(),
            title: c.title.clone(),
            open_at: c.open_at,
            close_at: c.close_at,
            tags: c.tags.clone(),
            questions: c.questions.clone(),
            published_seq: c.published_seq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedPage {
    pub items: Vec<CampaignSummary>,
    pub next_cursor: Option<String>,
    /// Highest event sequence number reflected in this page; pass it back as
    /// `since` to poll only for campaigns published afterwards.
    pub watermark: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateReport {
    pub state_hash: String,
    pub replayed_state_hash: String,
    pub last_seq: u64,
    pub store: String,
}

impl StateReport {
    pub fn consistent(&self) -> bool {
        self.state_hash == self.replayed_state_hash
    }
}
