use std::path::Path;

use votelab_cli::main_with;
use votelab_core::consistency::{reports_by_question, ConsistencyReport, RankingBasis};
use votelab_core::engine::{Actor, EngineConfig, Platform, ResultSet};
use votelab_core::export::{ExportFormat, ExportKind};
use votelab_core::fixture;
use votelab_core::rational::int;
use votelab_core::store::FileEventStore;

const CLOSE: &str = "2021-05-17T08:00:00Z";

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn cli(args: &[&str]) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = main_with(std::iter::once("votelab").chain(args.iter().copied()), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = cli(args);
    assert_eq!(r.code, 0, "votelab {args:?}: {}", r.err);
    r.out
}

fn seeded(dir: &Path, voters: &str) -> String {
    let store = dir.to_str().unwrap().to_string();
    ok(&["--store", &store, "seed", "covid-fixture", "--voters", voters]);
    store
}

fn reopen(store: &str) -> Platform {
    Platform::open(Box::new(FileEventStore::open(Path::new(store)).unwrap()), EngineConfig::default()).unwrap()
}

#[test]
fn seeding_twice_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "6");
    let again = cli(&["--store", &store, "seed", "covid-fixture", "--voters", "6"]);
    assert_eq!(again.code, 3);
    assert!(again.err.contains("StoreNotEmpty"), "{}", again.err);
    let reset = cli(&["--store", &store, "seed", "covid-fixture", "--voters", "6", "--reset"]);
    assert_eq!(reset.code, 0, "{}", reset.err);
}

#[test]
fn same_seed_gives_byte_identical_exports() {
    let render = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("s");
        let store = store.to_str().unwrap();
        let out = dir.path().join("x");
        ok(&["--store", store, "--seed", seed, "seed", "covid-fixture", "--voters", "12"]);
        ok(&["--store", store, "--at", CLOSE, "tally", "--now"]);
        ok(&["--store", store, "export", "cmp-0001", "all", "-o", out.to_str().unwrap()]);
        ExportKind::ALL
            .iter()
            .map(|k| std::fs::read(out.join(format!("cmp-0001-{k}.csv"))).unwrap())
            .collect::<Vec<_>>()
    };
    let a = render("7");
    assert_eq!(a, render("7"));
    assert_ne!(a[0], render("8")[0]);
}

#[test]
fn results_before_close_carry_an_interim_banner() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "6");
    let r = cli(&["--store", &store, "--at", "2021-05-10T00:00:00Z", "results", "cmp-0001"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.err.starts_with("INTERIM RESULTS"), "{}", r.err);
    assert!(r.out.contains("interim results"));

    ok(&["--store", &store, "--at", CLOSE, "tally", "--now"]);
    let r = cli(&["--store", &store, "results", "cmp-0001"]);
    assert!(r.err.is_empty(), "{}", r.err);
    assert!(r.out.contains("final results"));
}

#[test]
fn cli_outputs_equal_direct_engine_calls() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "20");
    ok(&["--store", &store, "--at", CLOSE, "tally", "--now"]);

    let via_cli: ResultSet = serde_json::from_str(&ok(&["--store", &store, "--format", "json", "results", "cmp-0001"])).unwrap();
    let p = reopen(&store);
    let c = "cmp-0001".into();
    let direct = p.get_results(&Actor::Admin, &c).unwrap();
    assert_eq!(via_cli, direct);

    for basis in [RankingBasis::Aggregate, RankingBasis::FirstChoice] {
        let text = ok(&[
            "--store",
            &store,
            "--format",
            "json",
            "report",
            "consistency",
            "cmp-0001",
            "--basis",
            &basis.to_string(),
        ]);
        let reports: Vec<ConsistencyReport> = serde_json::from_str(&text).unwrap();
        assert_eq!(reports, reports_by_question(&direct.tallies, basis));
    }

    let out = dir.path().join("exports");
    ok(&["--store", &store, "--format", "json", "export", "cmp-0001", "traces", "-o", out.to_str().unwrap()]);
    let exported = std::fs::read_to_string(out.join("cmp-0001-traces.json")).unwrap();
    let table = p.export(&Actor::Admin, &c, ExportKind::Traces, false, fixture::study_close_at()).unwrap();
    assert_eq!(exported, table.render(ExportFormat::Json).unwrap());
    assert!(table.column("duration_ms").is_some());

    let hash = ok(&["--store", &store, "state-hash"]);
    assert!(hash.starts_with(&p.state_hash()));
}

#[test]
fn protection_is_fully_consistent_on_the_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "120");
    ok(&["--store", &store, "--at", CLOSE, "tally", "--now"]);
    let text = ok(&["--store", &store, "--format", "json", "report", "consistency", "cmp-0001"]);
    let reports: Vec<ConsistencyReport> = serde_json::from_str(&text).unwrap();
    let protection = reports.iter().find(|r| r.question_id.as_str() == "protection").unwrap();
    assert_eq!(protection.per_rank, vec![int(1); 5]);
    let csv = ok(&["--store", &store, "--format", "csv", "report", "consistency", "cmp-0001"]);
    assert!(csv.starts_with("question_id,rank,consistency,mean"));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "4");
    // final export before the tally: state conflict
    let r = cli(&["--store", &store, "export", "cmp-0001", "results", "-o", dir.path().join("x").to_str().unwrap()]);
    assert_eq!(r.code, 3, "{}", r.err);
    assert!(r.err.contains("ResultsNotReady"));
    // bad arguments
    assert_eq!(cli(&["--store", &store, "report", "consistency", "cmp-0001", "--basis", "median"]).code, 2);
    assert_eq!(cli(&["--store", &store, "export", "cmp-0001", "votes", "-o", "x"]).code, 2);
    assert_eq!(cli(&["tally"]).code, 2);
    assert_eq!(cli(&["--store", &store, "--api-url", "http://127.0.0.1:9", "state-hash"]).code, 2);
    // unknown campaign
    assert_eq!(cli(&["--store", &store, "results", "cmp-9999"]).code, 1);
}

#[test]
fn replay_verify_reports_the_log() {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded(dir.path(), "4");
    let out = ok(&["--store", &store, "replay", "verify"]);
    assert!(out.starts_with("ok "), "{out}");
    // a damaged log refuses to open
    let log = dir.path().join("events.log");
    let mut bytes = std::fs::read(&log).unwrap();
    let n = bytes.len();
    bytes.truncate(n - 3);
    std::fs::write(&log, bytes).unwrap();
    let r = cli(&["--store", &store, "replay", "verify"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("CorruptEvent"), "{}", r.err);
}

#[test]
fn config_file_supplies_the_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("from-config");
    let config = dir.path().join("votelab.toml");
    std::fs::write(
        &config,
        format!(
            "store = \"file:{}\"\n\n[engine]\nsnapshot_every = 50\n\n[server]\nbind = \"127.0.0.1:0\"\n",
            store.display()
        ),
    )
    .unwrap();
    ok(&["--config", config.to_str().unwrap(), "seed", "covid-fixture", "--voters", "3"]);
    assert!(store.join("events.log").exists());
    assert!(store.join("snapshot.json").exists());
    let list = ok(&["--config", config.to_str().unwrap(), "campaigns"]);
    assert!(list.contains("cmp-0001"));
}

#[test]
fn published_report_needs_no_store() {
    let csv = ok(&["--store", "memory:", "--format", "csv", "report", "published"]);
    assert_eq!(csv.lines().count(), 1 + 4 * 5);
    let text = ok(&["report", "published"]);
    assert!(text.contains("protection"));
}
