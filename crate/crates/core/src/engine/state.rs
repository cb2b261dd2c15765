//! In-memory engine state and the event reducer that builds it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::events::{Event, EventRecord};
use super::model::{
    BallotRecord, Campaign, CampaignStatus, ChoiceTrace, FeedbackEntry, ResultSet, Timestamp,
};
use crate::ballot::{aggregate, MethodId, TallyError};
use crate::consistency::{build_rank_profile, consistency_report};
use crate::ids::{BallotId, CampaignId, Pseudonym, QuestionId};
use crate::store::identity::{IdentityRecord, IdentityTable};

/// Where an idempotency key points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdempotentHit {
    pub ballot_id: BallotId,
    pub revision_index: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineState {
    pub last_seq: u64,
    pub identities: IdentityTable,
    pub campaigns: BTreeMap<CampaignId, Campaign>,
    pub subscriptions: BTreeMap<Pseudonym, BTreeSet<String>>,
    pub ballots: BTreeMap<BallotId, BallotRecord>,
    /// `voter / campaign / question / method` → ballot.
    ballot_slots: BTreeMap<String, BallotId>,
    /// `voter / key` → acknowledged revision.
    idempotency: BTreeMap<String, IdempotentHit>,
    pub results: BTreeMap<CampaignId, ResultSet>,
    /// `voter / campaign / question` → feedback with history.
    pub feedback: BTreeMap<String, FeedbackEntry>,
}

pub(crate) fn slot_key(
    voter: &Pseudonym,
    campaign: &CampaignId,
    question: &QuestionId,
    method: MethodId,
) -> String {
    format!("{voter}/{campaign}/{question}/{method}")
}

pub(crate) fn idempotency_key(voter: &Pseudonym, key: &str) -> String {
    format!("{voter}/{key}")
}

pub(crate) fn feedback_key(voter: &Pseudonym, campaign: &CampaignId, question: &QuestionId) -> String {
    format!("{voter}/{campaign}/{question}")
}

impl EngineState {
    /// Applies one recorded event. Commands validate before emitting events,
    /// so application never fails.
    pub fn apply(&mut self, record: &EventRecord) {
        debug_assert_eq!(record.sequence_no, self.last_seq + 1, "events apply in order");
        let at = record.recorded_at;
        match &record.event {
            Event::IdentityRegistered { pseudonym, email_hash, role } => {
                self.identities.insert(IdentityRecord {
                    pseudonym: pseudonym.clone(),
                    email_hash: Some(email_hash.clone()),
                    role: *role,
                    verified: false,
                    registered_at: at,
                });
            }
            Event::IdentityVerified { pseudonym } => self.identities.mark_verified(pseudonym),
            Event::IdentityDeleted { pseudonym } => self.identities.erase(pseudonym),
            Event::CampaignCreated { campaign } | Event::CampaignUpdated { campaign } => {
                self.campaigns.insert(campaign.campaign_id.clone(), campaign.clone());
            }
            Event::Opened { campaign_id } => {
                if let Some(c) = self.campaigns.get_mut(campaign_id) {
                    c.status = CampaignStatus::Open;
                    c.published_seq = record.sequence_no;
                }
            }
            Event::TagAssigned { campaign_id, tags } => {
                if let Some(c) = self.campaigns.get_mut(campaign_id) {
                    c.tags = tags.clone();
                    c.published_seq = record.sequence_no;
                }
            }
            Event::Subscribed { voter, tags } => {
                self.subscriptions.insert(voter.clone(), tags.clone());
            }
            Event::BallotSubmitted {
                ballot_id,
                voter,
                campaign_id,
                question_id,
                method,
                revision,
            } => {
                let record = BallotRecord {
                    ballot_id: ballot_id.clone(),
                    voter_pseudonym: voter.clone(),
                    campaign_id: campaign_id.clone(),
                    question_id: question_id.clone(),
                    method: *method,
                    revisions: vec![revision.clone()],
                    trace: ChoiceTrace::summarize(std::slice::from_ref(revision)),
                };
                self.ballot_slots.insert(
                    slot_key(voter, campaign_id, question_id, *method),
                    ballot_id.clone(),
                );
                self.remember_key(voter, ballot_id, revision);
                self.ballots.insert(ballot_id.clone(), record);
            }
            Event::BallotRevised { ballot_id, revision } => {
                if let Some(rec) = self.ballots.get_mut(ballot_id) {
                    rec.revisions.push(revision.clone());
                    rec.trace = ChoiceTrace::summarize(&rec.revisions);
                    let voter = rec.voter_pseudonym.clone();
                    self.remember_key(&voter, ballot_id, revision);
                }
            }
            Event::Closed { campaign_id } => {
                if let Some(c) = self.campaigns.get_mut(campaign_id) {
                    c.status = CampaignStatus::Closed;
                }
            }
            Event::Tallied { campaign_id, results } => {
                if let Some(c) = self.campaigns.get_mut(campaign_id) {
                    c.status = CampaignStatus::Tallied;
                }
                self.results.insert(campaign_id.clone(), results.clone());
            }
            Event::ResultsReleased { campaign_id } => {
                if let Some(c) = self.campaigns.get_mut(campaign_id) {
                    c.results_released = true;
                }
            }
            Event::Feedback { record } => {
                let key = feedback_key(&record.voter_pseudonym, &record.campaign_id, &record.question_id);
                match self.feedback.get_mut(&key) {
                    Some(entry) => {
                        let previous = std::mem::replace(&mut entry.current, record.clone());
                        entry.history.push(previous);
                    }
                    None => {
                        self.feedback.insert(
                            key,
                            FeedbackEntry {
                                current: record.clone(),
                                history: Vec::new(),
                            },
                        );
                    }
                }
            }
        }
        self.last_seq = record.sequence_no;
    }

    fn remember_key(&mut self, voter: &Pseudonym, ballot_id: &BallotId, revision: &super::model::Revision) {
        if let Some(key) = &revision.idempotency_key {
            self.idempotency.insert(
                idempotency_key(voter, key),
                IdempotentHit {
                    ballot_id: ballot_id.clone(),
                    revision_index: revision.index,
                },
            );
        }
    }

    /// SHA-256 over the canonical JSON encoding (all maps are ordered).
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn campaign(&self, id: &CampaignId) -> Option<&Campaign> {
        self.campaigns.get(id)
    }

    pub fn ballot_in_slot(
        &self,
        voter: &Pseudonym,
        campaign: &CampaignId,
        question: &QuestionId,
        method: MethodId,
    ) -> Option<&BallotRecord> {
        self.ballot_slots
            .get(&slot_key(voter, campaign, question, method))
            .and_then(|id| self.ballots.get(id))
    }

    pub fn idempotent_hit(&self, voter: &Pseudonym, key: &str) -> Option<&IdempotentHit> {
        self.idempotency.get(&idempotency_key(voter, key))
    }

    pub fn ballots_for(&self, campaign: &CampaignId) -> impl Iterator<Item = &BallotRecord> {
        let campaign = campaign.clone();
        self.ballots.values().filter(move |b| b.campaign_id == campaign)
    }

    pub fn subscription(&self, voter: &Pseudonym) -> Option<&BTreeSet<String>> {
        self.subscriptions.get(voter)
    }

    /// Tag-intersection visibility, ignoring status and window.
    pub fn shares_tag(&self, voter: &Pseudonym, campaign: &Campaign) -> bool {
        self.subscriptions
            .get(voter)
            .is_some_and(|tags| campaign.shares_tag(tags))
    }

    /// Open campaigns inside their window whose tags meet the voter's
    /// subscription, soonest closing first.
    pub fn visible_campaigns(&self, voter: &Pseudonym, now: Timestamp) -> Vec<&Campaign> {
        let Some(tags) = self.subscriptions.get(voter) else {
            return Vec::new();
        };
        let mut out: Vec<&Campaign> = self
            .campaigns
            .values()
            .filter(|c| c.is_accepting(now) && c.shares_tag(tags))
            .collect();
        out.sort_by(|a, b| (a.close_at, &a.campaign_id).cmp(&(b.close_at, &b.campaign_id)));
        out
    }

    /// Fresh tallies over the latest revision of every ballot.
    pub fn compute_results(
        &self,
        campaign: &Campaign,
        computed_at: Timestamp,
        interim: bool,
    ) -> Result<ResultSet, TallyError> {
        let mut tallies = Vec::new();
        let mut consistency = Vec::new();
        for question in &campaign.questions {
            let mut per_question = Vec::new();
            for spec in &question.enabled_methods {
                let ballots: Vec<_> = self
                    .ballots_for(&campaign.campaign_id)
                    .filter(|b| b.question_id == question.question_id && b.method == spec.method_id)
                    .map(|b| b.counted().scores.clone())
                    .collect();
                per_question.push(aggregate(question, spec, &ballots)?);
            }
            if per_question.len() >= 2 {
                if let Ok(profile) = build_rank_profile(&per_question) {
                    consistency.push(consistency_report(&profile));
                }
            }
            tallies.extend(per_question);
        }
        Ok(ResultSet {
            campaign_id: campaign.campaign_id.clone(),
            interim,
            computed_at,
            tallies,
            consistency,
        })
    }
}
