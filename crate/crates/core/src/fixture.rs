//! The four-question COVID-19 study: published aggregates and a synthetic
//! 120-voter electorate whose ballots reproduce them.
//!
//! Only per-option percentages were published, so ballots are synthesized.
//! Per (question, method) the published percentages are apportioned into
//! integer score units with largest remainders, then nudged so that a
//! strictly larger percentage always ends with strictly more units. Units are
//! then handed out to voters within each method's per-ballot limits.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ballot::{MethodId, RawBallotInput, TallyResult};
use crate::consistency::{build_rank_profile, consistency_report, ConsistencyReport};
use crate::engine::{
    Actor, CampaignDefinition, ClientTrace, EngineError, EngineResult, MethodOrderPolicy,
    OptionDefinition, Platform, QuestionDefinition, Role, Timestamp,
};
use crate::engine::BallotSubmission;
use crate::ids::{CampaignId, OptionId, Pseudonym, QuestionId};
use crate::rational::{frac, Rational};

pub const FIXTURE_VOTERS: usize = 120;
pub const FIXTURE_METHODS: [MethodId; 4] = [MethodId::Mv, MethodId::Cav, MethodId::Sv, MethodId::Mbc];
pub const FIXTURE_TAGS: [&str; 2] = ["covid", "health"];
pub const OPTION_IDS: [&str; 5] = ["o1", "o2", "o3", "o4", "o5"];

pub type MethodTenths = (MethodId, [u32; 5]);

/// Published percentages in tenths of a percent, options o1..o5.
pub const PUBLISHED_TENTHS: [(&str, [MethodTenths; 4]); 4] = [
    (
        "vaccine",
        [
            (MethodId::Mv, [147, 318, 116, 186, 233]),
            (MethodId::Cav, [112, 186, 198, 252, 251]),
            (MethodId::Sv, [152, 193, 179, 249, 227]),
            (MethodId::Mbc, [166, 196, 191, 222, 225]),
        ],
    ),
    (
        "icu",
        [
            (MethodId::Mv, [264, 165, 79, 227, 265]),
            (MethodId::Cav, [218, 223, 148, 202, 208]),
            (MethodId::Sv, [229, 214, 143, 198, 216]),
            (MethodId::Mbc, [224, 217, 154, 199, 206]),
        ],
    ),
    (
        "protection",
        [
            (MethodId::Mv, [41, 158, 39, 629, 133]),
            (MethodId::Cav, [204, 217, 149, 224, 206]),
            (MethodId::Sv, [199, 214, 132, 251, 204]),
            (MethodId::Mbc, [172, 226, 118, 276, 208]),
        ],
    ),
    (
        "lockdown",
        [
            (MethodId::Mv, [311, 24, 254, 366, 38]),
            (MethodId::Cav, [226, 135, 212, 235, 192]),
            (MethodId::Sv, [245, 113, 208, 251, 183]),
            (MethodId::Mbc, [253, 132, 213, 246, 156]),
        ],
    ),
];

/// Question texts and option labels as published.
pub const QUESTIONS: [(&str, &str, [&str; 5]); 4] = [
    (
        "vaccine",
        "What are you most concerned about the COVID-19 vaccines?",
        [
            "How to be vaccinated as soon as possible.",
            "Their long-term side-effects.",
            "Their overall effectiveness.",
            "Their misuse by governments & companies.",
            "Discrimination, e.g. travels, access to facilities & services.",
        ],
    ),
    (
        "icu",
        "Among COVID-19 patients, which criterion should grant one access to an intensive care unit?",
        [
            "Being the youngest.",
            "Being the oldest.",
            "No denial of vaccination.",
            "No violation of lockdown rules.",
            "No health self-damage, e.g. smoking, drugs, alcohol.",
        ],
    ),
    (
        "protection",
        "Which is the most effective protection measure against a COVID-19 infection?",
        [
            "Wearing a mask.",
            "Physical distancing.",
            "Vaccination.",
            "Regular hand washing.",
            "Maintaining a healthy lifestyle.",
        ],
    ),
    (
        "lockdown",
        "Which is the most significant problem that the lockdown has caused?",
        [
            "Economic recession & unemployment.",
            "Government control & suppression of freedom.",
            "Social segregation & increased inequality.",
            "Mental distress.",
            "Reduced physical health condition.",
        ],
    ),
];

pub fn question_ids() -> Vec<QuestionId> {
    PUBLISHED_TENTHS.iter().map(|(q, _)| QuestionId::from(*q)).collect()
}

fn option_ids() -> Vec<OptionId> {
    OPTION_IDS.iter().map(|o| OptionId::from(*o)).collect()
}

/// Published row for (question, method) in tenths of a percent.
pub fn published_tenths(question: &str, method: MethodId) -> Option<[u32; 5]> {
    let (_, rows) = PUBLISHED_TENTHS.iter().find(|(q, _)| *q == question)?;
    rows.iter().find(|(m, _)| *m == method).map(|(_, v)| *v)
}

/// Published percentages as exact rationals.
pub fn published_shares(question: &str, method: MethodId) -> Option<Vec<Rational>> {
    published_tenths(question, method).map(|v| v.iter().map(|&t| frac(t as i64, 10)).collect())
}

/// One tally per (question, method), built straight from the published
/// percentages.
pub fn published_tallies() -> Vec<Vec<TallyResult>> {
    PUBLISHED_TENTHS
        .iter()
        .map(|(q, rows)| {
            rows.iter()
                .map(|(m, _)| {
                    TallyResult::from_aggregates(
                        QuestionId::from(*q),
                        *m,
                        option_ids(),
                        published_shares(q, *m).unwrap(),
                    )
                })
                .collect()
        })
        .collect()
}

/// Consistency reports over the published table, in question order.
pub fn published_consistency() -> Vec<ConsistencyReport> {
    published_tallies()
        .iter()
        .map(|tallies| consistency_report(&build_rank_profile(tallies).expect("published table is well formed")))
        .collect()
}

pub fn study_open_at() -> Timestamp {
    Utc.with_ymd_and_hms(2021, 5, 3, 8, 0, 0).unwrap()
}

pub fn study_close_at() -> Timestamp {
    Utc.with_ymd_and_hms(2021, 5, 17, 8, 0, 0).unwrap()
}

/// The study campaign as a designer would define it.
pub fn covid_definition() -> CampaignDefinition {
    CampaignDefinition {
        schema_version: crate::engine::DEFINITION_SCHEMA_VERSION,
        title: "COVID-19 preferences".into(),
        tags: FIXTURE_TAGS.iter().map(|t| t.to_string()).collect(),
        open_at: study_open_at(),
        close_at: study_close_at(),
        method_order_policy: MethodOrderPolicy::RandomizedPerVoter,
        method_params: None,
        hold_results: false,
        order_seed: None,
        questions: QUESTIONS
            .iter()
            .map(|(id, text, labels)| QuestionDefinition {
                question_id: Some(QuestionId::from(*id)),
                text: text.to_string(),
                options: OPTION_IDS
                    .iter()
                    .zip(labels)
                    .map(|(o, l)| OptionDefinition {
                        option_id: Some(OptionId::from(*o)),
                        label: l.to_string(),
                    })
                    .collect(),
                methods: FIXTURE_METHODS.to_vec(),
            })
            .collect(),
    }
}

// ----- synthetic ballots -----------------------------------------------------

/// Score granularity per method: (units per point, total units, per-voter
/// cap per option).
fn unit_plan(method: MethodId, voters: u32) -> (u32, u32, u32) {
    match method {
        MethodId::Mv => (1, voters, voters),
        MethodId::Cav => (2, voters * 5, voters * 2),
        MethodId::Sv => (5, voters * 25 / 2, voters * 5),
        MethodId::Mbc => (5, voters * 15, voters * 5),
        other => panic!("no synthetic plan for {other}"),
    }
}

/// Indices sorted by weight descending, ties by index.
fn order_by_weight(weights: &[u32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// Largest-remainder apportionment of `total` units proportional to
/// `weights`, within `[lo, hi]` per entry, followed by an order repair:
/// a strictly larger weight receives strictly more units wherever the
/// bounds leave room to move one.
pub fn apportion(weights: &[u32], total: u32, lo: u32, hi: u32) -> Vec<u32> {
    let sum: u64 = weights.iter().map(|&w| u64::from(w)).sum();
    assert!(sum > 0, "weights must not all be zero");
    let quotas: Vec<(u64, u64)> = weights
        .iter()
        .map(|&w| {
            let q = u64::from(w) * u64::from(total);
            (q / sum, q % sum)
        })
        .collect();
    let mut counts: Vec<u32> = quotas.iter().map(|(f, _)| (*f as u32).clamp(lo, hi)).collect();
    let mut by_remainder: Vec<usize> = (0..weights.len()).collect();
    by_remainder.sort_by(|&a, &b| quotas[b].1.cmp(&quotas[a].1).then(a.cmp(&b)));
    let mut assigned: u32 = counts.iter().sum();
    let mut cursor = 0;
    while assigned < total {
        let i = by_remainder[cursor % by_remainder.len()];
        if counts[i] < hi {
            counts[i] += 1;
            assigned += 1;
        }
        cursor += 1;
    }
    while assigned > total {
        let i = by_remainder[by_remainder.len() - 1 - cursor % by_remainder.len()];
        if counts[i] > lo {
            counts[i] -= 1;
            assigned -= 1;
        }
        cursor += 1;
    }

    let order = order_by_weight(weights);
    loop {
        let mut changed = false;
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            // small electorates may lack the units to separate every pair
            if weights[a] > weights[b] && counts[a] <= counts[b] && counts[b] > lo && counts[a] < hi {
                counts[b] -= 1;
                counts[a] += 1;
                changed = true;
            }
        }
        if !changed {
            return counts;
        }
    }
}

/// Spreads `units` among `voters`, each taking at most `cap`.
fn spread(units: u32, voters: usize, cap: u32, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut slots: Vec<usize> = (0..voters).flat_map(|v| std::iter::repeat_n(v, cap as usize)).collect();
    slots.shuffle(rng);
    let mut out = vec![0; voters];
    for &v in &slots[..units as usize] {
        out[v] += 1;
    }
    out
}

const MBC_POINTS: [u32; 5] = [5, 4, 3, 2, 1];

/// Whether `remaining` per-option MBC points can be split into `k` full
/// rankings: sorted prefix sums stay under those of `k` copies of 5,4,3,2,1.
fn mbc_feasible(remaining: &[u32], k: u32) -> bool {
    let mut sorted = remaining.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut acc = 0;
    let mut bound = 0;
    for (value, points) in sorted.iter().zip(MBC_POINTS) {
        acc += value;
        bound += points * k;
        if acc > bound {
            return false;
        }
    }
    acc == bound
}

fn all_rankings() -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == MBC_POINTS.len() {
            out.push(prefix.clone());
            return;
        }
        for p in MBC_POINTS {
            if !prefix.contains(&p) {
                prefix.push(p);
                extend(prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::new(), &mut out);
    out
}

/// Splits per-option point totals into one full ranking per voter, as
/// per-voter point vectors. Depth-first over rankings in random order; the
/// prefix-sum bound prunes almost every dead end, so backtracking is rare.
fn decompose_mbc(totals: &[u32], voters: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<u32>> {
    assert!(mbc_feasible(totals, voters as u32), "MBC totals are not decomposable");
    let rankings = all_rankings();
    let shuffled = |rng: &mut ChaCha8Rng| {
        let mut idx: Vec<usize> = (0..rankings.len()).collect();
        idx.shuffle(rng);
        idx
    };
    let mut remaining = totals.to_vec();
    let mut chosen: Vec<usize> = Vec::with_capacity(voters);
    let mut frames: Vec<(Vec<usize>, usize)> = vec![(shuffled(rng), 0)];
    while chosen.len() < voters {
        let depth = chosen.len();
        let k = (voters - depth - 1) as u32;
        let (candidates, next) = frames.last_mut().expect("search frame");
        let mut picked = None;
        while *next < candidates.len() {
            let r = &rankings[candidates[*next]];
            *next += 1;
            let rest: Option<Vec<u32>> = remaining.iter().zip(r).map(|(a, b)| a.checked_sub(*b)).collect();
            if let Some(rest) = rest.filter(|rest| mbc_feasible(rest, k)) {
                picked = Some((candidates[*next - 1], rest));
                break;
            }
        }
        match picked {
            Some((r, rest)) => {
                remaining = rest;
                chosen.push(r);
                frames.push((shuffled(rng), 0));
            }
            None => {
                frames.pop();
                let r = chosen.pop().expect("MBC totals are not decomposable");
                for (a, b) in remaining.iter_mut().zip(&rankings[r]) {
                    *a += b;
                }
            }
        }
    }
    chosen.into_iter().map(|r| rankings[r].clone()).collect()
}

fn input_from_units(method: MethodId, units: &[u32]) -> RawBallotInput {
    let ids = option_ids();
    match method {
        MethodId::Mv => {
            let i = units.iter().position(|&u| u == 1).expect("one vote per MV ballot");
            RawBallotInput::SingleChoice(ids[i].clone())
        }
        MethodId::Cav | MethodId::Sv => {
            let (per_point, _, _) = unit_plan(method, 1);
            RawBallotInput::PerOptionScore(
                ids.iter()
                    .zip(units)
                    .map(|(o, &u)| (o.clone(), frac(u as i64, per_point as i64)))
                    .collect(),
            )
        }
        MethodId::Mbc => {
            let order = order_by_weight(units);
            RawBallotInput::RankedSubset(order.iter().map(|&i| ids[i].clone()).collect())
        }
        other => panic!("no synthetic ballots for {other}"),
    }
}

fn random_input(method: MethodId, rng: &mut ChaCha8Rng) -> RawBallotInput {
    let ids = option_ids();
    match method {
        MethodId::Mv => RawBallotInput::SingleChoice(ids[rng.random_range(0..ids.len())].clone()),
        MethodId::Cav | MethodId::Sv => {
            let (per_point, _, _) = unit_plan(method, 1);
            RawBallotInput::PerOptionScore(
                ids.iter()
                    .map(|o| (o.clone(), frac(rng.random_range(0..=per_point) as i64, per_point as i64)))
                    .collect(),
            )
        }
        _ => {
            let mut order = ids;
            order.shuffle(rng);
            let keep = rng.random_range(1..=order.len());
            order.truncate(keep);
            RawBallotInput::RankedSubset(order)
        }
    }
}

/// One synthetic ballot slot: the counted input plus an optional earlier
/// revision the voter later replaced.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticBallot {
    pub voter: usize,
    pub question_id: QuestionId,
    pub method: MethodId,
    pub input: RawBallotInput,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub earlier: Option<RawBallotInput>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticElectorate {
    pub seed: u64,
    pub voters: usize,
    pub ballots: Vec<SyntheticBallot>,
}

impl SyntheticElectorate {
    pub fn ballot(&self, voter: usize, question: &str, method: MethodId) -> Option<&SyntheticBallot> {
        self.ballots
            .iter()
            .find(|b| b.voter == voter && b.question_id.as_str() == question && b.method == method)
    }
}

/// Per-option unit totals the synthetic ballots of (question, method) sum to.
pub fn unit_targets(question: &str, method: MethodId, voters: usize) -> Option<Vec<u32>> {
    let weights = published_tenths(question, method)?;
    let (_, total, cap) = unit_plan(method, voters as u32);
    let lo = if method == MethodId::Mbc { voters as u32 } else { 0 };
    Some(apportion(&weights, total, lo, cap))
}

/// Ballots for every voter, question and method, deterministic in `seed`.
/// Roughly one slot in ten also carries an earlier, superseded revision.
pub fn synthesize(seed: u64, voters: usize) -> SyntheticElectorate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ballots = Vec::with_capacity(voters * 16);
    for (question, rows) in PUBLISHED_TENTHS.iter() {
        for (method, _) in rows.iter() {
            let targets = unit_targets(question, *method, voters).unwrap();
            let per_voter: Vec<Vec<u32>> = match method {
                MethodId::Mv => {
                    let mut picks: Vec<usize> = targets
                        .iter()
                        .enumerate()
                        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
                        .collect();
                    picks.shuffle(&mut rng);
                    picks
                        .into_iter()
                        .map(|i| (0..5).map(|j| u32::from(i == j)).collect())
                        .collect()
                }
                MethodId::Mbc => decompose_mbc(&targets, voters, &mut rng),
                _ => {
                    let (per_point, _, _) = unit_plan(*method, 1);
                    let columns: Vec<Vec<u32>> =
                        targets.iter().map(|&t| spread(t, voters, per_point, &mut rng)).collect();
                    (0..voters).map(|v| columns.iter().map(|c| c[v]).collect()).collect()
                }
            };
            for (voter, units) in per_voter.iter().enumerate() {
                let input = input_from_units(*method, units);
                let earlier = if rng.random_range(0..10) == 0 {
                    Some(random_input(*method, &mut rng)).filter(|e| *e != input)
                } else {
                    None
                };
                ballots.push(SyntheticBallot {
                    voter,
                    question_id: QuestionId::from(*question),
                    method: *method,
                    input,
                    earlier,
                });
            }
        }
    }
    ballots.sort_by(|a, b| (a.voter, &a.question_id, a.method).cmp(&(b.voter, &b.question_id, b.method)));
    SyntheticElectorate { seed, voters, ballots }
}

// ----- seeding a platform ----------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedReport {
    pub campaign_id: CampaignId,
    pub designer: Pseudonym,
    pub voters: Vec<Pseudonym>,
    pub ballots: usize,
    pub revisions: usize,
    /// Receipt time of the last submitted ballot.
    pub last_activity: Timestamp,
}

pub const FIXTURE_EMAIL_DOMAIN: &str = "fixture.invalid";

/// Registers a designer and the synthetic voters, creates and opens the
/// study campaign, and submits every synthetic ballot through the engine.
/// The campaign is left open; run a scheduler tick after `study_close_at`
/// to tally it. Needs an empty store.
pub fn seed_covid(platform: &Platform, seed: u64, voters: usize) -> EngineResult<SeedReport> {
    let existing = platform.last_seq();
    if existing != 0 {
        return Err(EngineError::StoreNotEmpty(existing));
    }
    let electorate = synthesize(seed, voters);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
    let setup = Utc.with_ymd_and_hms(2021, 5, 1, 9, 0, 0).unwrap();

    let (designer, _) =
        platform.register_identity(&format!("designer@{FIXTURE_EMAIL_DOMAIN}"), Role::Designer, setup, &mut rng)?;
    platform.verify_identity(&designer.pseudonym, setup)?;
    let actor = Actor::Designer(designer.pseudonym.clone());
    let campaign = platform.create_campaign(&actor, &covid_definition(), setup)?;

    let tags: BTreeSet<String> = FIXTURE_TAGS.iter().map(|t| t.to_string()).collect();
    let mut pseudonyms = Vec::with_capacity(voters);
    for v in 0..voters {
        let at = setup + Duration::seconds(60 + v as i64);
        let (record, _) = platform.register_identity(
            &format!("voter-{:03}@{FIXTURE_EMAIL_DOMAIN}", v + 1),
            Role::Voter,
            at,
            &mut rng,
        )?;
        platform.verify_identity(&record.pseudonym, at)?;
        platform.subscribe(&record.pseudonym, &tags, at)?;
        pseudonyms.push(record.pseudonym);
    }
    platform.open_campaign(&actor, &campaign.campaign_id, setup + Duration::days(1))?;

    let by_slot: BTreeMap<(usize, &str, MethodId), &SyntheticBallot> = electorate
        .ballots
        .iter()
        .map(|b| ((b.voter, b.question_id.as_str(), b.method), b))
        .collect();
    let mut ballots = 0;
    let mut revisions = 0;
    let mut last_activity = study_open_at();
    for (v, voter) in pseudonyms.iter().enumerate() {
        let order = platform.method_order(voter, &campaign.campaign_id)?;
        let mut clock = study_open_at() + Duration::minutes(10) + Duration::hours(2 * v as i64);
        for question in question_ids() {
            for method in &order {
                let slot = by_slot[&(v, question.as_str(), *method)];
                let inputs = slot.earlier.iter().chain(std::iter::once(&slot.input));
                for input in inputs {
                    let duration = Duration::milliseconds(rng.random_range(4_000..90_000));
                    let submitted_at = clock - Duration::seconds(1);
                    let opened = submitted_at - duration;
                    let trace = ClientTrace {
                        ballot_opened_at: opened,
                        first_interaction_at: opened + duration / 4,
                        submitted_at,
                        in_form_changes: rng.random_range(0..3),
                    };
                    let ack = platform.submit_ballot(
                        &BallotSubmission {
                            voter: voter.clone(),
                            campaign_id: campaign.campaign_id.clone(),
                            question_id: question.clone(),
                            method: *method,
                            input: input.clone(),
                            trace,
                            idempotency_key: None,
                        },
                        clock,
                    )?;
                    if ack.revision_index == 0 {
                        ballots += 1;
                    } else {
                        revisions += 1;
                    }
                    last_activity = clock;
                    clock += Duration::seconds(95);
                }
            }
        }
    }
    Ok(SeedReport {
        campaign_id: campaign.campaign_id,
        designer: designer.pseudonym,
        voters: pseudonyms,
        ballots,
        revisions,
        last_activity,
    })
}

/// Sum of unit counts per option, straight from the synthetic ballots.
pub fn unit_totals(electorate: &SyntheticElectorate, question: &str, method: MethodId) -> Vec<Rational> {
    let ids = option_ids();
    let mut totals = vec![Rational::zero(); ids.len()];
    for b in electorate
        .ballots
        .iter()
        .filter(|b| b.question_id.as_str() == question && b.method == method)
    {
        match &b.input {
            RawBallotInput::SingleChoice(o) => {
                let i = ids.iter().position(|x| x == o).unwrap();
                totals[i] += Rational::from_integer(1);
            }
            RawBallotInput::PerOptionScore(levels) => {
                for (o, l) in levels {
                    let i = ids.iter().position(|x| x == o).unwrap();
                    totals[i] += *l;
                }
            }
            RawBallotInput::RankedSubset(r) => {
                let n = ids.len() as i64;
                let m = r.len() as i64;
                for (pos, o) in r.iter().enumerate() {
                    let i = ids.iter().position(|x| x == o).unwrap();
                    totals[i] += frac(m - pos as i64, n);
                }
            }
            RawBallotInput::IntegerAllocation(_) => unreachable!("study has no allocation ballots"),
        }
    }
    totals
}
