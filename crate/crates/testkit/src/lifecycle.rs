//! A small scripted world over an in-memory platform, and the campaign
//! lifecycle scenarios run against it.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::thread;

use chrono::{Duration, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use votelab_core::ballot::{MethodId, RawBallotInput};
use votelab_core::engine::*;
use votelab_core::ids::{CampaignId, Pseudonym};
use votelab_core::rational::frac;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Hours after a fixed reference instant.
pub fn t(h: i64) -> Timestamp {
    Utc.with_ymd_and_hms(2024, 3, 1, 0, 0, 0).unwrap() + Duration::hours(h)
}

pub fn tags(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// A platform with one verified designer. Campaigns open at `t(1)` and close
/// at `t(10)`.
pub struct World {
    pub platform: Platform,
    pub designer: Actor,
    pub rng: ChaCha8Rng,
}

impl World {
    pub fn new() -> Self {
        Self::with(Platform::in_memory(EngineConfig::default()))
    }

    pub fn with(platform: Platform) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (d, _) = platform
            .register_identity("d@example.org", Role::Designer, t(0), &mut rng)
            .unwrap();
        platform.verify_identity(&d.pseudonym, t(0)).unwrap();
        Self {
            platform,
            designer: Actor::Designer(d.pseudonym),
            rng,
        }
    }

    pub fn voter(&mut self, email: &str, subscribed: &[&str]) -> Pseudonym {
        self.voter_result(email, subscribed).unwrap()
    }

    pub fn voter_result(&mut self, email: &str, subscribed: &[&str]) -> EngineResult<Pseudonym> {
        let (v, _) = self.platform.register_identity(email, Role::Voter, t(0), &mut self.rng)?;
        self.platform.verify_identity(&v.pseudonym, t(0))?;
        if !subscribed.is_empty() {
            self.platform.subscribe(&v.pseudonym, &tags(subscribed), t(0))?;
        }
        Ok(v.pseudonym)
    }

    pub fn definition(&self, campaign_tags: &[&str], methods: &[MethodId]) -> CampaignDefinition {
        CampaignDefinition {
            schema_version: 1,
            title: "Bike lanes".into(),
            tags: tags(campaign_tags),
            open_at: t(1),
            close_at: t(10),
            method_order_policy: MethodOrderPolicy::Fixed,
            method_params: None,
            hold_results: false,
            order_seed: None,
            questions: vec![QuestionDefinition {
                question_id: None,
                text: "Which street first?".into(),
                options: ["Main", "Elm", "Oak"]
                    .iter()
                    .map(|l| OptionDefinition {
                        option_id: None,
                        label: l.to_string(),
                    })
                    .collect(),
                methods: methods.to_vec(),
            }],
        }
    }

    /// Creates and opens a campaign with MV and SV on its single question.
    pub fn open_campaign(&self, campaign_tags: &[&str]) -> CampaignId {
        let c = self
            .platform
            .create_campaign(
                &self.designer,
                &self.definition(campaign_tags, &[MethodId::Mv, MethodId::Sv]),
                t(0),
            )
            .unwrap();
        self.platform.open_campaign(&self.designer, &c.campaign_id, t(0)).unwrap();
        c.campaign_id
    }
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

/// A plausible trace for a ballot submitted at `at`.
pub fn trace(at: Timestamp) -> ClientTrace {
    ClientTrace {
        ballot_opened_at: at - Duration::seconds(30),
        first_interaction_at: at - Duration::seconds(20),
        submitted_at: at,
        in_form_changes: 1,
    }
}

/// An MV ballot on question `q1`.
pub fn mv(voter: &Pseudonym, campaign: &CampaignId, option: &str, at: Timestamp) -> BallotSubmission {
    BallotSubmission {
        voter: voter.clone(),
        campaign_id: campaign.clone(),
        question_id: "q1".into(),
        method: MethodId::Mv,
        input: RawBallotInput::single(option),
        trace: trace(at),
        idempotency_key: None,
    }
}

/// `threads` schedulers tick the same closed campaign at once; exactly one
/// tally must come out, in every one of `runs` rounds.
pub fn exactly_once_tally(runs: usize, threads: usize) -> Result<(), String> {
    for run in 0..runs {
        let mut w = World::new();
        let c = w.open_campaign(&["city"]);
        for i in 0..5 {
            let v = w.voter(&format!("v{i}@example.org"), &["city"]);
            let at = t(2) + Duration::minutes(i);
            w.platform.submit_ballot(&mv(&v, &c, "o2", at), at).map_err(|e| e.to_string())?;
        }
        let platform = Arc::new(w.platform);
        let handles: Vec<_> = (0..threads)
            .map(|k| {
                let p = Arc::clone(&platform);
                thread::spawn(move || p.scheduler_tick(t(10) + Duration::seconds(k as i64)).len())
            })
            .collect();
        let tallied: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
        ensure!(tallied == 1, "run {run}: {tallied} ticks reported a tally");
        let events = platform.events_from(1).map_err(|e| e.to_string())?;
        let count = events.iter().filter(|e| e.event.kind() == "tallied").count();
        ensure!(count == 1, "run {run}: {count} tallied events");
        let late = platform.scheduler_tick(t(11));
        ensure!(late.is_empty(), "run {run}: a later tick tallied again");
    }
    Ok(())
}

/// The last instant before `close_at` accepts; `close_at` itself and anything
/// before `open_at` do not.
pub fn ballot_at_close_rejected() -> Result<(), String> {
    let mut w = World::new();
    let c = w.open_campaign(&["city"]);
    let v = w.voter("v@example.org", &["city"]);
    let last_ok = t(10) - Duration::milliseconds(1);
    w.platform
        .submit_ballot(&mv(&v, &c, "o1", last_ok), last_ok)
        .map_err(|e| format!("ballot just before close: {e}"))?;
    match w.platform.submit_ballot(&mv(&v, &c, "o2", t(10)), t(10)) {
        Err(e) if e.code() == "CampaignNotOpen" => {}
        other => return Err(format!("ballot at close_at: {other:?}")),
    }
    let early = t(1) - Duration::seconds(1);
    let v2 = w.voter("v2@example.org", &["city"]);
    match w.platform.submit_ballot(&mv(&v2, &c, "o1", early), early) {
        Err(e) if e.code() == "CampaignNotOpen" => Ok(()),
        other => Err(format!("ballot before open_at: {other:?}")),
    }
}

/// Three revisions of one ballot: all kept, only the last tallied.
pub fn last_revision_counts() -> Result<(), String> {
    let mut w = World::new();
    let c = w.open_campaign(&["city"]);
    let v = w.voter("v@example.org", &["city"]);
    for (i, o) in ["o1", "o2", "o3"].iter().enumerate() {
        let at = t(2) + Duration::minutes(i as i64);
        let ack = w.platform.submit_ballot(&mv(&v, &c, o, at), at).map_err(|e| e.to_string())?;
        ensure!(ack.revision_index == i as u32, "revision index {} for submission {i}", ack.revision_index);
    }
    w.platform.scheduler_tick(t(10));
    let r = w.platform.get_results(&w.designer, &c).map_err(|e| e.to_string())?;
    let tally = r.tally(&"q1".into(), MethodId::Mv).ok_or("no MV tally")?;
    ensure!(
        tally.aggregates == vec![frac(0, 1), frac(0, 1), frac(1, 1)],
        "aggregates {:?}",
        tally.aggregates
    );
    ensure!(tally.counted_ballots == 1, "counted {}", tally.counted_ballots);
    let record = w.platform.read(|s| s.ballots.values().next().cloned()).ok_or("no ballot")?;
    ensure!(record.revisions.len() == 3, "{} revisions kept", record.revisions.len());
    Ok(())
}

/// Random tag sets for 25 campaigns and `voters` voters; every voter's
/// visible campaigns must equal the non-empty-intersection oracle.
pub fn visibility_oracle(voters: usize, seed: u64) -> Result<(), String> {
    let universe = ["a", "b", "c", "d", "e", "f"];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = World::new();
    let mut campaigns = Vec::new();
    for i in 0..25 {
        let set: Vec<&str> = universe.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let set = if set.is_empty() { vec![universe[i % 6]] } else { set };
        let id = w.open_campaign(&set);
        campaigns.push((id, tags(&set)));
    }
    for i in 0..voters {
        let set: Vec<&str> = universe.iter().copied().filter(|_| rng.random_bool(0.25)).collect();
        let v = w.voter(&format!("p{i}@example.org"), &set);
        let subscribed = tags(&set);
        let mut expected: Vec<CampaignId> = campaigns
            .iter()
            .filter(|(_, ct)| ct.intersection(&subscribed).next().is_some())
            .map(|(id, _)| id.clone())
            .collect();
        expected.sort();
        let mut got: Vec<CampaignId> = w
            .platform
            .visible_campaigns(&v, t(2))
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|c| c.campaign_id)
            .collect();
        got.sort();
        ensure!(got == expected, "voter {i} with tags {set:?}: saw {got:?}, expected {expected:?}");
    }
    Ok(())
}

/// The lifecycle scenarios by name.
pub fn suite(stress_runs: usize, visibility_voters: usize) -> Vec<(&'static str, Result<(), String>)> {
    vec![
        ("exactly-once tally under interleaved ticks", exactly_once_tally(stress_runs, 4)),
        ("ballot at close_at rejected", ballot_at_close_rejected()),
        ("only the last revision counts", last_revision_counts()),
        ("visibility equals tag-intersection oracle", visibility_oracle(visibility_voters, 99)),
    ]
}
