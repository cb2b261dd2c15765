use std::collections::BTreeMap;
use std::path::PathBuf;

use num_rational::Ratio;
use num_traits::Signed;
use serde_json::Value;

use votelab_core::ballot::MethodId;
use votelab_core::engine::{Actor, EngineConfig, Platform};
use votelab_core::fixture::{self, FIXTURE_VOTERS, PUBLISHED_TENTHS};
use votelab_core::rational::{frac, Rational};

const SHIPPED_SEED: u64 = 7;

fn shipped_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/covid-120-seed7.json")
}

fn shipped() -> Value {
    let path = shipped_path();
    if std::env::var_os("VOTELAB_REGENERATE_FIXTURE").is_some() {
        let e = fixture::synthesize(SHIPPED_SEED, FIXTURE_VOTERS);
        std::fs::write(&path, serde_json::to_string_pretty(&e).unwrap() + "\n").unwrap();
    }
    let text = std::fs::read_to_string(&path).expect("shipped fixture present");
    serde_json::from_str(&text).unwrap()
}

fn parse_ratio(text: &str) -> Ratio<i64> {
    match text.split_once('/') {
        Some((n, d)) => Ratio::new(n.parse().unwrap(), d.parse().unwrap()),
        None => Ratio::from_integer(text.parse().unwrap()),
    }
}

/// Straight-line re-summation over the raw JSON, independent of the tally code.
fn independent_shares(doc: &Value) -> BTreeMap<(String, String), Vec<Ratio<i64>>> {
    let options = ["o1", "o2", "o3", "o4", "o5"];
    let mut sums: BTreeMap<(String, String), Vec<Ratio<i64>>> = BTreeMap::new();
    for b in doc["ballots"].as_array().unwrap() {
        let key = (
            b["question_id"].as_str().unwrap().to_string(),
            b["method"].as_str().unwrap().to_string(),
        );
        let row = sums.entry(key).or_insert_with(|| vec![Ratio::from_integer(0); 5]);
        let input = &b["input"];
        if let Some(o) = input.get("single_choice") {
            let i = options.iter().position(|x| *x == o.as_str().unwrap()).unwrap();
            row[i] += 1;
        } else if let Some(levels) = input.get("per_option_score") {
            for (o, v) in levels.as_object().unwrap() {
                let i = options.iter().position(|x| x == o).unwrap();
                row[i] += parse_ratio(v.as_str().unwrap());
            }
        } else if let Some(ranked) = input.get("ranked_subset") {
            let ranked = ranked.as_array().unwrap();
            let m = ranked.len() as i64;
            for (pos, o) in ranked.iter().enumerate() {
                let i = options.iter().position(|x| *x == o.as_str().unwrap()).unwrap();
                row[i] += Ratio::new(m - pos as i64, 5);
            }
        } else {
            panic!("unexpected ballot input {input}");
        }
    }
    for row in sums.values_mut() {
        let total: Ratio<i64> = row.iter().sum();
        for v in row.iter_mut() {
            *v = *v * 100 / total;
        }
    }
    sums
}

#[test]
fn shipped_fixture_matches_generator() {
    let doc = shipped();
    let regenerated = serde_json::to_value(fixture::synthesize(SHIPPED_SEED, FIXTURE_VOTERS)).unwrap();
    assert_eq!(doc, regenerated, "rerun with VOTELAB_REGENERATE_FIXTURE=1 after changing the generator");
    assert_eq!(doc["ballots"].as_array().unwrap().len(), 120 * 4 * 4);
}

#[test]
fn engine_tallies_equal_independent_summation() {
    let doc = shipped();
    let oracle = independent_shares(&doc);

    let platform = Platform::in_memory(EngineConfig::default());
    let report = fixture::seed_covid(&platform, SHIPPED_SEED, FIXTURE_VOTERS).unwrap();
    assert_eq!(report.ballots, 1920);
    platform.scheduler_tick(fixture::study_close_at());
    let results = platform.get_results(&Actor::Admin, &report.campaign_id).unwrap();
    assert_eq!(results.tallies.len(), 16);
    for t in &results.tallies {
        let expected = &oracle[&(t.question_id.to_string(), t.method.to_string())];
        assert_eq!(t.shares.as_ref().unwrap(), expected, "{}/{}", t.question_id, t.method);
        assert_eq!(t.counted_ballots, 120);
    }
}

#[test]
fn fixture_shares_track_the_published_table() {
    let platform = Platform::in_memory(EngineConfig::default());
    let report = fixture::seed_covid(&platform, 11, FIXTURE_VOTERS).unwrap();
    platform.scheduler_tick(fixture::study_close_at());
    let results = platform.get_results(&Actor::Admin, &report.campaign_id).unwrap();

    for (q, rows) in PUBLISHED_TENTHS.iter() {
        for (m, _) in rows.iter() {
            let t = results.tally(&(*q).into(), *m).unwrap();
            let published = fixture::published_shares(q, *m).unwrap();
            let published_total: Rational = published.iter().sum();
            // one MV voter moves a share by 5/6 of a point; finer methods by far less
            let tolerance = if *m == MethodId::Mv { frac(3, 2) } else { frac(1, 2) };
            for (got, want) in t.shares.as_ref().unwrap().iter().zip(&published) {
                let want = want * 100 / published_total;
                assert!((got - want).abs() <= tolerance, "{q}/{m}: {got} vs {want}");
            }
        }
    }

    // the synthesized electorate reproduces the published rank profile exactly
    let live: Vec<_> = results.consistency.iter().map(|c| (c.per_rank.clone(), c.mean)).collect();
    let published: Vec<_> = fixture::published_consistency()
        .iter()
        .map(|c| (c.per_rank.clone(), c.mean))
        .collect();
    assert_eq!(live, published);
}

#[test]
fn definition_round_trips_through_json() {
    let def = fixture::covid_definition();
    let text = serde_json::to_string(&def).unwrap();
    assert_eq!(serde_json::from_str::<votelab_core::engine::CampaignDefinition>(&text).unwrap(), def);
}

#[test]
fn replayed_fixture_log_matches_golden_tallies() {
    use votelab_core::ballot::TallyResult;
    use votelab_core::store::FileEventStore;

    let dir = tempfile::tempdir().unwrap();
    let live = Platform::open(Box::new(FileEventStore::open(dir.path()).unwrap()), EngineConfig::default()).unwrap();
    let report = fixture::seed_covid(&live, SHIPPED_SEED, FIXTURE_VOTERS).unwrap();
    live.scheduler_tick(fixture::study_close_at());
    let hash = live.state_hash();
    drop(live);

    let replayed = Platform::open(Box::new(FileEventStore::open(dir.path()).unwrap()), EngineConfig::default()).unwrap();
    assert_eq!(replayed.state_hash(), hash);
    let tallies = replayed.get_results(&Actor::Admin, &report.campaign_id).unwrap().tallies;

    let golden_path = shipped_path().with_file_name("covid-120-seed7-tallies.json");
    if std::env::var_os("VOTELAB_REGENERATE_FIXTURE").is_some() {
        std::fs::write(&golden_path, serde_json::to_string_pretty(&tallies).unwrap() + "\n").unwrap();
    }
    let golden: Vec<TallyResult> =
        serde_json::from_str(&std::fs::read_to_string(&golden_path).unwrap()).unwrap();
    assert_eq!(tallies, golden);
}
