//! Command side of the engine.
//!
//! Every mutation validates against current state, turns into one or more
//! [`Event`]s, is appended to the store, and only then applied to memory.
//! A single reader/writer lock guards state and store together: writers
//! (ballot intake, ticks, designer edits) serialize, readers run concurrently
//! and see the state as of the last committed write. This is stricter than
//! per-slot locking and gives each tally a consistent snapshot for free.

use std::collections::BTreeSet;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use chrono::Duration;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::error::{EngineError, EngineResult, FieldError};
use super::events::{Event, EventRecord};
use super::model::*;
use super::order::{default_order_seed, method_order};
use super::state::EngineState;
use crate::ballot::{
    normalize_scores, MethodId, OptionItem, Question, RawBallotInput, VotingMethodSpec,
};
use crate::ids::{BallotId, CampaignId, OptionId, Pseudonym, QuestionId};
use crate::rational::Rational;
use crate::store::identity::{generate_pseudonym, hash_email, IdentityRecord};
use crate::store::{self, EventStore, MemoryEventStore, Snapshot};

struct Inner {
    state: EngineState,
    store: Box<dyn EventStore>,
}

pub struct Platform {
    inner: RwLock<Inner>,
    config: EngineConfig,
}

/// A ballot as sent by a voter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotSubmission {
    pub voter: Pseudonym,
    pub campaign_id: CampaignId,
    pub question_id: QuestionId,
    pub method: MethodId,
    pub input: RawBallotInput,
    pub trace: ClientTrace,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idempotency_key: Option<String>,
}

/// What a voter needs to render one ballot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotForm {
    pub campaign_id: CampaignId,
    pub question: Question,
    pub spec: VotingMethodSpec,
    /// Admissible per-option scores, `None` for integer allocations.
    #[serde(with = "crate::rational::serde_opt_vec")]
    pub admissible_scores: Option<Vec<Rational>>,
    pub method_order: Vec<MethodId>,
    pub current: Option<BallotRecord>,
}

fn clean_tags(tags: &BTreeSet<String>) -> EngineResult<BTreeSet<String>> {
    if tags.is_empty() || tags.iter().any(|t| t.trim().is_empty()) {
        return Err(EngineError::EmptyTagSet);
    }
    Ok(tags.clone())
}

impl Platform {
    /// Opens a platform over `store`, replaying it into memory.
    pub fn open(store: Box<dyn EventStore>, config: EngineConfig) -> EngineResult<Self> {
        let state = store::replay(store.as_ref())?;
        Ok(Self {
            inner: RwLock::new(Inner { state, store }),
            config,
        })
    }

    pub fn in_memory(config: EngineConfig) -> Self {
        Self::open(Box::new(MemoryEventStore::new()), config).expect("empty store replays")
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    fn read_guard(&self) -> RwLockReadGuard<'_, Inner> {
        self.inner.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write_guard(&self) -> RwLockWriteGuard<'_, Inner> {
        self.inner.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Runs `f` against a consistent view of the state.
    pub fn read<R>(&self, f: impl FnOnce(&EngineState) -> R) -> R {
        f(&self.read_guard().state)
    }

    pub fn state_hash(&self) -> String {
        self.read(|s| s.state_hash())
    }

    pub fn last_seq(&self) -> u64 {
        self.read(|s| s.last_seq)
    }

    pub fn describe_store(&self) -> String {
        self.read_guard().store.describe()
    }

    /// Every stored event with `sequence_no >= from_seq`.
    pub fn events_from(&self, from_seq: u64) -> EngineResult<Vec<EventRecord>> {
        Ok(self.read_guard().store.read_from(from_seq)?)
    }

    /// Replays the backing store from scratch (ignoring snapshots) and
    /// returns the resulting state hash.
    pub fn replayed_state_hash(&self) -> EngineResult<String> {
        let guard = self.read_guard();
        Ok(store::replay_full(guard.store.as_ref())?.state_hash())
    }

    /// Live hash next to a from-scratch replay of the store.
    pub fn state_report(&self) -> EngineResult<StateReport> {
        let guard = self.read_guard();
        let replayed = store::replay_full(guard.store.as_ref())?.state_hash();
        Ok(StateReport {
            state_hash: guard.state.state_hash(),
            replayed_state_hash: replayed,
            last_seq: guard.state.last_seq,
            store: guard.store.describe(),
        })
    }

    fn commit(&self, inner: &mut Inner, now: Timestamp, events: Vec<Event>) -> EngineResult<()> {
        if events.is_empty() {
            return Ok(());
        }
        let base = inner.state.last_seq;
        let records: Vec<EventRecord> = events
            .into_iter()
            .enumerate()
            .map(|(i, event)| EventRecord {
                sequence_no: base + 1 + i as u64,
                recorded_at: now,
                event,
            })
            .collect();
        inner.store.append(&records)?;
        for rec in &records {
            inner.state.apply(rec);
        }
        let every = self.config.snapshot_every;
        if every > 0 && base / every != inner.state.last_seq / every {
            if let Err(e) = inner.store.save_snapshot(&Snapshot::of(&inner.state)) {
                tracing::warn!(error = %e, "snapshot failed; replay falls back to the full log");
            }
        }
        Ok(())
    }

    // ----- identities -------------------------------------------------------

    /// Registers `email` under a fresh pseudonym, or returns the existing
    /// identity (with `false`) when the email is already known.
    pub fn register_identity(
        &self,
        email: &str,
        role: Role,
        now: Timestamp,
        rng: &mut impl Rng,
    ) -> EngineResult<(IdentityRecord, bool)> {
        let email = email.trim();
        if email.len() < 3 || !email.contains('@') {
            return Err(EngineError::InvalidDefinition(vec![FieldError::new(
                "email",
                "not an email address",
            )]));
        }
        let hash = hash_email(&self.config.identity_pepper, email);
        let mut inner = self.write_guard();
        if let Some(existing) = inner.state.identities.by_email_hash(&hash) {
            return Ok((existing.clone(), false));
        }
        let pseudonym = loop {
            let p = generate_pseudonym(role, rng);
            if inner.state.identities.get(&p).is_none() {
                break p;
            }
        };
        self.commit(
            &mut inner,
            now,
            vec![Event::IdentityRegistered {
                pseudonym: pseudonym.clone(),
                email_hash: hash,
                role,
            }],
        )?;
        let record = inner.state.identities.get(&pseudonym).cloned().expect("just inserted");
        Ok((record, true))
    }

    pub fn verify_identity(&self, pseudonym: &Pseudonym, now: Timestamp) -> EngineResult<IdentityRecord> {
        let mut inner = self.write_guard();
        let record = inner
            .state
            .identities
            .get(pseudonym)
            .cloned()
            .ok_or(EngineError::UnknownIdentity)?;
        if record.email_hash.is_none() {
            return Err(EngineError::UnknownIdentity);
        }
        if !record.verified {
            self.commit(&mut inner, now, vec![Event::IdentityVerified { pseudonym: pseudonym.clone() }])?;
        }
        Ok(inner.state.identities.get(pseudonym).cloned().unwrap())
    }

    /// Drops the email link of an identity; ballots stay under the pseudonym.
    pub fn delete_identity(&self, pseudonym: &Pseudonym, now: Timestamp) -> EngineResult<()> {
        let mut inner = self.write_guard();
        if inner.state.identities.get(pseudonym).is_none() {
            return Err(EngineError::UnknownIdentity);
        }
        self.commit(&mut inner, now, vec![Event::IdentityDeleted { pseudonym: pseudonym.clone() }])
    }

    pub fn identity_by_email(&self, email: &str) -> Option<IdentityRecord> {
        let hash = hash_email(&self.config.identity_pepper, email);
        self.read(|s| s.identities.by_email_hash(&hash).cloned())
    }

    pub fn identity(&self, pseudonym: &Pseudonym) -> Option<IdentityRecord> {
        self.read(|s| s.identities.get(pseudonym).cloned())
    }

    pub(crate) fn require_voter(state: &EngineState, voter: &Pseudonym) -> EngineResult<()> {
        match state.identities.get(voter) {
            Some(r) if r.role == Role::Voter && r.verified => Ok(()),
            Some(r) if r.role == Role::Voter => Err(EngineError::UnverifiedIdentity(voter.clone())),
            _ => Err(EngineError::UnknownVoter(voter.clone())),
        }
    }

    pub(crate) fn require_designer(state: &EngineState, actor: &Actor) -> EngineResult<Pseudonym> {
        match actor {
            Actor::Admin => Ok(Pseudonym::from("admin")),
            Actor::Designer(id) => match state.identities.get(id) {
                Some(r) if r.role == Role::Designer && r.verified => Ok(id.clone()),
                _ => Err(EngineError::NotAuthorized),
            },
            Actor::Voter(_) => Err(EngineError::NotAuthorized),
        }
    }

    pub(crate) fn managed<'a>(state: &'a EngineState, actor: &Actor, id: &CampaignId) -> EngineResult<&'a Campaign> {
        let campaign = state
            .campaign(id)
            .ok_or_else(|| EngineError::UnknownCampaign(id.clone()))?;
        if !actor.can_manage(campaign) {
            return Err(EngineError::NotAuthorized);
        }
        Ok(campaign)
    }

    // ----- campaign lifecycle -----------------------------------------------

    fn resolve_definition(
        &self,
        def: &CampaignDefinition,
        campaign_id: CampaignId,
        designer_id: Pseudonym,
        now: Timestamp,
    ) -> EngineResult<Campaign> {
        let mut errors = Vec::new();
        if def.title.trim().is_empty() {
            errors.push(FieldError::new("title", "must not be empty"));
        }
        if def.open_at >= def.close_at {
            errors.push(FieldError::new("close_at", "must be after open_at"));
        }
        if def.tags.iter().any(|t| t.trim().is_empty()) {
            errors.push(FieldError::new("tags", "tags must be non-empty strings"));
        }
        let params = def.method_params.unwrap_or(self.config.method_params);
        if params.qv_budget == 0 {
            errors.push(FieldError::new("method_params.qv_budget", "must be positive"));
        }
        if params.cumulative_total == 0 {
            errors.push(FieldError::new("method_params.cumulative_total", "must be positive"));
        }
        if def.questions.is_empty() {
            errors.push(FieldError::new("questions", "at least one question is required"));
        }

        let mut question_ids = BTreeSet::new();
        let mut questions = Vec::with_capacity(def.questions.len());
        for (qi, qd) in def.questions.iter().enumerate() {
            let field = format!("questions[{qi}]");
            let qid = qd
                .question_id
                .clone()
                .unwrap_or_else(|| QuestionId(format!("q{}", qi + 1)));
            if qid.as_str().trim().is_empty() {
                errors.push(FieldError::new(format!("{field}.question_id"), "must not be empty"));
            } else if !question_ids.insert(qid.clone()) {
                errors.push(FieldError::new(
                    format!("{field}.question_id"),
                    format!("duplicate question id {qid}"),
                ));
            }
            if qd.text.trim().is_empty() {
                errors.push(FieldError::new(format!("{field}.text"), "must not be empty"));
            }
            for (oi, od) in qd.options.iter().enumerate() {
                if od.label.trim().is_empty() {
                    errors.push(FieldError::new(
                        format!("{field}.options[{oi}].label"),
                        "must not be empty",
                    ));
                }
            }
            let question = Question {
                question_id: qid,
                text: qd.text.clone(),
                options: qd
                    .options
                    .iter()
                    .enumerate()
                    .map(|(oi, od)| OptionItem {
                        option_id: od
                            .option_id
                            .clone()
                            .unwrap_or_else(|| OptionId(format!("o{}", oi + 1))),
                        label: od.label.clone(),
                    })
                    .collect(),
                enabled_methods: qd
                    .methods
                    .iter()
                    .map(|m| VotingMethodSpec::standard(*m, &params))
                    .collect(),
            };
            if let Err(problems) = question.check() {
                for p in problems {
                    errors.push(FieldError::new(field.clone(), p.to_string()));
                }
            }
            questions.push(question);
        }
        if !errors.is_empty() {
            return Err(EngineError::InvalidDefinition(errors));
        }
        let order_seed = def.order_seed.unwrap_or_else(|| default_order_seed(&campaign_id));
        Ok(Campaign {
            campaign_id,
            title: def.title.trim().to_string(),
            designer_id,
            status: CampaignStatus::Draft,
            open_at: def.open_at,
            close_at: def.close_at,
            tags: def.tags.clone(),
            questions,
            method_order_policy: def.method_order_policy,
            method_params: params,
            parent_campaign_id: None,
            order_seed,
            hold_results: def.hold_results,
            results_released: false,
            created_at: now,
            published_seq: 0,
        })
    }

    fn next_campaign_id(state: &EngineState) -> CampaignId {
        CampaignId(format!("cmp-{:04}", state.campaigns.len() + 1))
    }

    pub fn create_campaign(
        &self,
        actor: &Actor,
        definition: &CampaignDefinition,
        now: Timestamp,
    ) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let designer = Self::require_designer(&inner.state, actor)?;
        let id = Self::next_campaign_id(&inner.state);
        let campaign = self.resolve_definition(definition, id.clone(), designer, now)?;
        self.commit(&mut inner, now, vec![Event::CampaignCreated { campaign }])?;
        Ok(inner.state.campaign(&id).cloned().unwrap())
    }

    /// Replaces a draft's definition.
    pub fn update_campaign(
        &self,
        actor: &Actor,
        id: &CampaignId,
        definition: &CampaignDefinition,
        now: Timestamp,
    ) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let current = Self::managed(&inner.state, actor, id)?.clone();
        if current.status != CampaignStatus::Draft {
            return Err(EngineError::NotDraft {
                campaign: id.clone(),
                status: current.status,
            });
        }
        let mut campaign =
            self.resolve_definition(definition, id.clone(), current.designer_id.clone(), current.created_at)?;
        campaign.parent_campaign_id = current.parent_campaign_id;
        self.commit(&mut inner, now, vec![Event::CampaignUpdated { campaign }])?;
        Ok(inner.state.campaign(id).cloned().unwrap())
    }

    /// New draft with the parent's definition and no ballots.
    pub fn clone_campaign(&self, actor: &Actor, parent: &CampaignId, now: Timestamp) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let source = Self::managed(&inner.state, actor, parent)?.clone();
        let designer = match actor {
            Actor::Designer(id) => id.clone(),
            _ => source.designer_id.clone(),
        };
        let id = Self::next_campaign_id(&inner.state);
        let mut campaign = self.resolve_definition(&source.definition(), id.clone(), designer, now)?;
        campaign.parent_campaign_id = Some(parent.clone());
        self.commit(&mut inner, now, vec![Event::CampaignCreated { campaign }])?;
        Ok(inner.state.campaign(&id).cloned().unwrap())
    }

    pub fn open_campaign(&self, actor: &Actor, id: &CampaignId, now: Timestamp) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let campaign = Self::managed(&inner.state, actor, id)?;
        if campaign.status != CampaignStatus::Draft {
            return Err(EngineError::NotDraft {
                campaign: id.clone(),
                status: campaign.status,
            });
        }
        self.commit(&mut inner, now, vec![Event::Opened { campaign_id: id.clone() }])?;
        Ok(inner.state.campaign(id).cloned().unwrap())
    }

    /// Replaces the campaign's tag set. Visibility is computed on read, so the
    /// change is seen by the next visibility query.
    pub fn assign_tags(
        &self,
        actor: &Actor,
        id: &CampaignId,
        tags: &BTreeSet<String>,
        now: Timestamp,
    ) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let campaign = Self::managed(&inner.state, actor, id)?;
        if campaign.status == CampaignStatus::Tallied {
            return Err(EngineError::CampaignFinalized(id.clone()));
        }
        let tags = clean_tags(tags)?;
        self.commit(
            &mut inner,
            now,
            vec![Event::TagAssigned {
                campaign_id: id.clone(),
                tags,
            }],
        )?;
        Ok(inner.state.campaign(id).cloned().unwrap())
    }

    pub fn campaign(&self, actor: &Actor, id: &CampaignId) -> EngineResult<Campaign> {
        self.read(|s| Self::managed(s, actor, id).cloned())
    }

    /// Campaigns the actor manages, by id.
    pub fn campaigns(&self, actor: &Actor) -> Vec<Campaign> {
        self.read(|s| {
            s.campaigns
                .values()
                .filter(|c| actor.can_manage(c))
                .cloned()
                .collect()
        })
    }

    // ----- subscriptions and visibility --------------------------------------

    pub fn subscribe(&self, voter: &Pseudonym, tags: &BTreeSet<String>, now: Timestamp) -> EngineResult<BTreeSet<String>> {
        let mut inner = self.write_guard();
        Self::require_voter(&inner.state, voter)?;
        let tags = clean_tags(tags)?;
        self.commit(
            &mut inner,
            now,
            vec![Event::Subscribed {
                voter: voter.clone(),
                tags: tags.clone(),
            }],
        )?;
        Ok(tags)
    }

    pub fn subscription(&self, voter: &Pseudonym) -> BTreeSet<String> {
        self.read(|s| s.subscription(voter).cloned().unwrap_or_default())
    }

    pub fn visible_campaigns(&self, voter: &Pseudonym, now: Timestamp) -> EngineResult<Vec<Campaign>> {
        self.read(|s| {
            if s.identities.get(voter).is_none() {
                return Err(EngineError::UnknownVoter(voter.clone()));
            }
            Ok(s.visible_campaigns(voter, now).into_iter().cloned().collect())
        })
    }

    /// Pull feed over visible campaigns. `since` keeps only campaigns
    /// published after that watermark; `cursor` continues a previous page.
    pub fn feed(
        &self,
        voter: &Pseudonym,
        now: Timestamp,
        since: Option<u64>,
        cursor: Option<&str>,
        limit: usize,
    ) -> EngineResult<FeedPage> {
        let visible = self.visible_campaigns(voter, now)?;
        let watermark = self.last_seq();
        let after = cursor.and_then(parse_cursor);
        let mut matching = visible
            .iter()
            .filter(|c| since.is_none_or(|s| c.published_seq > s))
            .filter(|c| match &after {
                Some((ms, id)) => (c.close_at.timestamp_millis(), c.campaign_id.as_str()) > (*ms, id.as_str()),
                None => true,
            });
        let limit = limit.max(1);
        let items: Vec<CampaignSummary> = matching.by_ref().take(limit).map(CampaignSummary::from).collect();
        let next_cursor = match (items.last(), matching.next()) {
            (Some(last), Some(_)) => Some(format!("{}:{}", last.close_at.timestamp_millis(), last.campaign_id)),
            _ => None,
        };
        Ok(FeedPage {
            items,
            next_cursor,
            watermark,
        })
    }

    pub fn method_order(&self, voter: &Pseudonym, id: &CampaignId) -> EngineResult<Vec<MethodId>> {
        self.read(|s| {
            let campaign = s
                .campaign(id)
                .ok_or_else(|| EngineError::UnknownCampaign(id.clone()))?;
            Ok(method_order(campaign, voter))
        })
    }

    // ----- ballots ----------------------------------------------------------

    pub fn ballot_form(
        &self,
        voter: &Pseudonym,
        id: &CampaignId,
        question: &QuestionId,
        method: MethodId,
    ) -> EngineResult<BallotForm> {
        self.read(|s| {
            Self::require_voter(s, voter)?;
            let campaign = s
                .campaign(id)
                .ok_or_else(|| EngineError::UnknownCampaign(id.clone()))?;
            if campaign.status == CampaignStatus::Draft || !s.shares_tag(voter, campaign) {
                return Err(EngineError::NotVisibleToVoter(id.clone()));
            }
            let q = campaign
                .question(question)
                .ok_or_else(|| EngineError::UnknownQuestion(question.clone()))?;
            let spec = q.method(method).ok_or_else(|| EngineError::MethodNotEnabled {
                question: question.clone(),
                method,
            })?;
            Ok(BallotForm {
                campaign_id: id.clone(),
                question: q.clone(),
                spec: spec.clone(),
                admissible_scores: spec.admissible_scores(q.option_count()),
                method_order: method_order(campaign, voter),
                current: s.ballot_in_slot(voter, id, question, method).cloned(),
            })
        })
    }

    fn check_trace(&self, trace: &ClientTrace, campaign: &Campaign, now: Timestamp) -> EngineResult<()> {
        if !(trace.ballot_opened_at <= trace.first_interaction_at
            && trace.first_interaction_at <= trace.submitted_at)
        {
            return Err(EngineError::ClockSkew(
                "expected ballot_opened_at <= first_interaction_at <= submitted_at".into(),
            ));
        }
        let skew = Duration::seconds(self.config.clock_skew_secs);
        let earliest = campaign.open_at - skew;
        let latest = now + skew;
        if trace.ballot_opened_at < earliest || trace.submitted_at > latest {
            return Err(EngineError::ClockSkew(format!(
                "trace spans {} .. {}, session window is {} .. {}",
                trace.ballot_opened_at, trace.submitted_at, earliest, latest
            )));
        }
        Ok(())
    }

    /// Accepts a ballot or a revision of it. `now` is the server receipt time
    /// and alone decides whether the voting window is open.
    pub fn submit_ballot(&self, sub: &BallotSubmission, now: Timestamp) -> EngineResult<BallotAck> {
        let mut inner = self.write_guard();
        let state = &inner.state;
        Self::require_voter(state, &sub.voter)?;

        if let Some(key) = &sub.idempotency_key {
            if let Some(hit) = state.idempotent_hit(&sub.voter, key) {
                let record = state.ballots.get(&hit.ballot_id).cloned().expect("indexed ballot exists");
                return Ok(BallotAck {
                    ballot_id: hit.ballot_id.clone(),
                    revision_index: hit.revision_index,
                    replayed: true,
                    record,
                });
            }
        }

        let campaign = state
            .campaign(&sub.campaign_id)
            .ok_or_else(|| EngineError::UnknownCampaign(sub.campaign_id.clone()))?;
        if !campaign.is_accepting(now) {
            return Err(EngineError::CampaignNotOpen {
                campaign: sub.campaign_id.clone(),
                at: now,
            });
        }
        if !state.shares_tag(&sub.voter, campaign) {
            return Err(EngineError::NotVisibleToVoter(sub.campaign_id.clone()));
        }
        let question = campaign
            .question(&sub.question_id)
            .ok_or_else(|| EngineError::UnknownQuestion(sub.question_id.clone()))?;
        let spec = question
            .method(sub.method)
            .ok_or_else(|| EngineError::MethodNotEnabled {
                question: sub.question_id.clone(),
                method: sub.method,
            })?;
        let scores = normalize_scores(question, spec, &sub.input)?;
        self.check_trace(&sub.trace, campaign, now)?;

        let existing = state.ballot_in_slot(&sub.voter, &sub.campaign_id, &sub.question_id, sub.method);
        let (event, ballot_id, index) = match existing {
            Some(record) => {
                let previous = record.counted().received_at;
                if now <= previous {
                    return Err(EngineError::RevisionOutOfOrder {
                        previous,
                        received: now,
                    });
                }
                let index = record.revisions.len() as u32;
                let revision = Revision {
                    index,
                    scores,
                    received_at: now,
                    client: sub.trace.clone(),
                    idempotency_key: sub.idempotency_key.clone(),
                };
                (
                    Event::BallotRevised {
                        ballot_id: record.ballot_id.clone(),
                        revision,
                    },
                    record.ballot_id.clone(),
                    index,
                )
            }
            None => {
                let ballot_id = BallotId(format!("bal-{:06}", state.ballots.len() + 1));
                let revision = Revision {
                    index: 0,
                    scores,
                    received_at: now,
                    client: sub.trace.clone(),
                    idempotency_key: sub.idempotency_key.clone(),
                };
                (
                    Event::BallotSubmitted {
                        ballot_id: ballot_id.clone(),
                        voter: sub.voter.clone(),
                        campaign_id: sub.campaign_id.clone(),
                        question_id: sub.question_id.clone(),
                        method: sub.method,
                        revision,
                    },
                    ballot_id,
                    0,
                )
            }
        };
        self.commit(&mut inner, now, vec![event])?;
        let record = inner.state.ballots.get(&ballot_id).cloned().unwrap();
        Ok(BallotAck {
            ballot_id,
            revision_index: index,
            replayed: false,
            record,
        })
    }

    // ----- tallying and results ---------------------------------------------

    /// Closes every open campaign whose window has ended and tallies every
    /// closed campaign, each in one atomic append. Returns the campaigns
    /// tallied by this call; repeated calls are no-ops.
    pub fn scheduler_tick(&self, now: Timestamp) -> Vec<CampaignId> {
        let mut inner = self.write_guard();
        let due: Vec<CampaignId> = inner
            .state
            .campaigns
            .values()
            .filter(|c| {
                (c.status == CampaignStatus::Open && now >= c.close_at) || c.status == CampaignStatus::Closed
            })
            .map(|c| c.campaign_id.clone())
            .collect();

        let mut tallied = Vec::new();
        for id in due {
            let campaign = inner.state.campaign(&id).cloned().expect("due campaign exists");
            let results = match inner.state.compute_results(&campaign, now, false) {
                Ok(r) => r,
                Err(e) => {
                    tracing::warn!(campaign = %id, error = %e, "tally failed; retrying next tick");
                    continue;
                }
            };
            let mut events = Vec::new();
            if campaign.status == CampaignStatus::Open {
                events.push(Event::Closed { campaign_id: id.clone() });
            }
            events.push(Event::Tallied {
                campaign_id: id.clone(),
                results,
            });
            if !campaign.hold_results {
                events.push(Event::ResultsReleased { campaign_id: id.clone() });
            }
            match self.commit(&mut inner, now, events) {
                Ok(()) => tallied.push(id),
                Err(e) => tracing::warn!(campaign = %id, error = %e, "tally commit failed; retrying next tick"),
            }
        }
        tallied
    }

    /// Fresh interim snapshot for the campaign's designer. Never touches the
    /// frozen results.
    pub fn on_demand_results(&self, actor: &Actor, id: &CampaignId, now: Timestamp) -> EngineResult<ResultSet> {
        self.read(|s| {
            let campaign = Self::managed(s, actor, id)?;
            if campaign.status == CampaignStatus::Draft {
                return Err(EngineError::CampaignDraft(id.clone()));
            }
            Ok(s.compute_results(campaign, now, true)?)
        })
    }

    pub fn release_results(&self, actor: &Actor, id: &CampaignId, now: Timestamp) -> EngineResult<Campaign> {
        let mut inner = self.write_guard();
        let campaign = Self::managed(&inner.state, actor, id)?;
        if campaign.status != CampaignStatus::Tallied {
            return Err(EngineError::ResultsNotReady(id.clone()));
        }
        if !campaign.results_released {
            self.commit(&mut inner, now, vec![Event::ResultsReleased { campaign_id: id.clone() }])?;
        }
        Ok(inner.state.campaign(id).cloned().unwrap())
    }

    /// Frozen results. Designers see them once tallied; voters once released
    /// and only for campaigns sharing a tag with their subscription.
    pub fn get_results(&self, actor: &Actor, id: &CampaignId) -> EngineResult<ResultSet> {
        self.read(|s| {
            let campaign = s
                .campaign(id)
                .ok_or_else(|| EngineError::UnknownCampaign(id.clone()))?;
            match actor {
                Actor::Voter(voter) => {
                    Self::require_voter(s, voter)?;
                    if !s.shares_tag(voter, campaign) {
                        return Err(EngineError::NotVisibleToVoter(id.clone()));
                    }
                }
                other if other.can_manage(campaign) => {}
                _ => return Err(EngineError::NotAuthorized),
            }
            let results = s
                .results
                .get(id)
                .ok_or_else(|| EngineError::ResultsNotReady(id.clone()))?;
            if matches!(actor, Actor::Voter(_)) && !campaign.results_released {
                return Err(EngineError::ResultsNotReleased(id.clone()));
            }
            Ok(results.clone())
        })
    }

    // ----- feedback ---------------------------------------------------------

    pub fn submit_feedback(
        &self,
        voter: &Pseudonym,
        id: &CampaignId,
        question: &QuestionId,
        rating: i64,
        text: Option<String>,
        now: Timestamp,
    ) -> EngineResult<FeedbackRecord> {
        let mut inner = self.write_guard();
        let state = &inner.state;
        Self::require_voter(state, voter)?;
        let campaign = state
            .campaign(id)
            .ok_or_else(|| EngineError::UnknownCampaign(id.clone()))?;
        if !state.shares_tag(voter, campaign) {
            return Err(EngineError::NotVisibleToVoter(id.clone()));
        }
        let closed = matches!(campaign.status, CampaignStatus::Closed | CampaignStatus::Tallied);
        if !closed || !campaign.results_released {
            return Err(EngineError::ResultsNotReleased(id.clone()));
        }
        if campaign.question(question).is_none() {
            return Err(EngineError::UnknownQuestion(question.clone()));
        }
        if !(1..=5).contains(&rating) {
            return Err(EngineError::RatingOutOfRange(rating));
        }
        let record = FeedbackRecord {
            voter_pseudonym: voter.clone(),
            campaign_id: id.clone(),
            question_id: question.clone(),
            rating: rating as u8,
            text: text.filter(|t| !t.trim().is_empty()),
            created_at: now,
        };
        self.commit(&mut inner, now, vec![Event::Feedback { record: record.clone() }])?;
        Ok(record)
    }
}

fn parse_cursor(cursor: &str) -> Option<(i64, CampaignId)> {
    let (ms, id) = cursor.split_once(':')?;
    Some((ms.parse().ok()?, CampaignId::from(id)))
}
