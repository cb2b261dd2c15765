//! Acceptance run: one PASS/FAIL line per primary criterion, driven through
//! the `votelab` binary against an embedded store where the criterion is
//! about the tool, and through the shared suites where it is about the engine.

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use votelab_core::consistency::ConsistencyReport;
use votelab_core::engine::{EngineConfig, Platform, ResultSet};
use votelab_core::export::{ExportKind, ExportTable};
use votelab_core::fixture::{FIXTURE_EMAIL_DOMAIN, FIXTURE_VOTERS};
use votelab_core::ids::CampaignId;
use votelab_core::rational::{frac, int, Rational};
use votelab_core::store::{identity::hash_email, FileEventStore};
use votelab_testkit::{lifecycle, scoring};

const CLOSE: &str = "2021-05-17T08:00:00Z";

struct Outcome {
    id: u8,
    name: &'static str,
    elapsed: Duration,
    result: Result<String, String>,
}

fn votelab(args: &[&str]) -> Result<Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_votelab"))
        .args(args)
        .env_remove("VOTELAB_STORE")
        .env_remove("VOTELAB_API_URL")
        .env_remove("VOTELAB_CONFIG")
        .output()
        .map_err(|e| format!("spawn votelab: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "votelab {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(out)
}

fn stdout_json<T: serde::de::DeserializeOwned>(args: &[&str]) -> Result<T, String> {
    let out = votelab(args)?;
    serde_json::from_slice(&out.stdout).map_err(|e| format!("votelab {}: bad JSON: {e}", args.join(" ")))
}

/// Expected per-rank consistency and mean for each question.
fn goldens() -> Vec<(&'static str, Vec<Rational>, Rational)> {
    let q = |n| frac(n, 4);
    vec![
        ("vaccine", vec![q(2), q(3), q(2), q(2), q(3)], frac(3, 5)),
        ("icu", vec![q(2), q(2), q(2), q(3), q(4)], frac(13, 20)),
        ("protection", vec![int(1); 5], int(1)),
        ("lockdown", vec![q(3), q(3), q(4), q(4), q(4)], frac(9, 10)),
    ]
}

fn check_goldens(reports: &[ConsistencyReport]) -> Result<(), String> {
    let expected = goldens();
    if reports.len() != expected.len() {
        return Err(format!("{} question reports, expected {}", reports.len(), expected.len()));
    }
    for (q, per_rank, mean) in expected {
        let r = reports
            .iter()
            .find(|r| r.question_id.as_str() == q)
            .ok_or(format!("no report for {q}"))?;
        let methods: Vec<String> = r.methods.iter().map(|m| m.to_string()).collect();
        if methods != ["mv", "cav", "sv", "mbc"] {
            return Err(format!("{q}: methods {methods:?}"));
        }
        if r.per_rank != per_rank || r.mean != mean {
            return Err(format!("{q}: got {:?} mean {}, expected {:?} mean {}", r.per_rank, r.mean, per_rank, mean));
        }
    }
    Ok(())
}

fn published_reports() -> Result<Vec<ConsistencyReport>, String> {
    stdout_json(&["report", "published", "--format", "json"])
}

fn timed(
    id: u8,
    name: &'static str,
    budget: Option<Duration>,
    f: impl FnOnce() -> Result<String, String>,
) -> Outcome {
    let start = Instant::now();
    let mut result = f();
    let elapsed = start.elapsed();
    if let (Ok(_), Some(limit)) = (&result, budget) {
        if elapsed >= limit {
            result = Err(format!("took {:.2}s, budget {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()));
        }
    }
    Outcome {
        id,
        name,
        elapsed,
        result,
    }
}

fn criterion_1() -> Outcome {
    timed(1, "per-rank consistency from the published table", Some(Duration::from_secs(1)), || {
        check_goldens(&published_reports()?)?;
        Ok("protection 1,1,1,1,1; lockdown .75,.75,1,1,1; vaccine .5,.75,.5,.5,.75; icu .5,.5,.5,.75,1 (exact)".into())
    })
}

fn criterion_2() -> Outcome {
    timed(2, "mean(c4,c5) >= mean(c1,c2) for every question", None, || {
        let reports = published_reports()?;
        let mut notes = Vec::new();
        for r in &reports {
            let low = (r.per_rank[3] + r.per_rank[4]) / 2;
            let high = (r.per_rank[0] + r.per_rank[1]) / 2;
            if low < high {
                return Err(format!("{}: mean(c4,c5) = {low} < mean(c1,c2) = {high}", r.question_id));
            }
            notes.push(format!("{} {}>={}", r.question_id, low, high));
        }
        Ok(notes.join(", "))
    })
}

fn criterion_3() -> Outcome {
    timed(3, "argmax c1 is protection with c1 = 1", None, || {
        let reports = published_reports()?;
        let best = reports.iter().map(|r| r.per_rank[0]).max().ok_or("no reports")?;
        let leaders: Vec<&str> = reports
            .iter()
            .filter(|r| r.per_rank[0] == best)
            .map(|r| r.question_id.as_str())
            .collect();
        if leaders != ["protection"] || best != int(1) {
            return Err(format!("argmax c1 = {leaders:?} with c1 = {best}"));
        }
        Ok("protection, c1 = 1".into())
    })
}

fn suite_outcome(results: Vec<(&'static str, Result<(), String>)>) -> Result<String, String> {
    let failures: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    if failures.is_empty() {
        Ok(format!("{} checks", results.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn criterion_4() -> Outcome {
    timed(4, "method-scoring properties, 1000 cases each", Some(Duration::from_secs(30)), || {
        suite_outcome(scoring::suite(1000))
    })
}

fn criterion_5() -> Outcome {
    timed(5, "lifecycle suite (100 stress runs, 500-voter visibility oracle)", Some(Duration::from_secs(60)), || {
        suite_outcome(lifecycle::suite(100, 500))
    })
}

fn check_export(path: &Path, campaign: &CampaignId, kind: ExportKind, hashes: &[String]) -> Result<usize, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let table = ExportTable::from_csv(campaign.clone(), kind, false, &text).map_err(|e| format!("{kind}: {e}"))?;
    if let Some(col) = table.columns.iter().find(|c| c.contains("email")) {
        return Err(format!("{kind}: identity column {col}"));
    }
    if text.contains('@') || text.contains(FIXTURE_EMAIL_DOMAIN) {
        return Err(format!("{kind}: contains an email address"));
    }
    if let Some(h) = hashes.iter().find(|h| text.contains(h.as_str())) {
        return Err(format!("{kind}: contains email hash {h}"));
    }
    Ok(table.rows.len())
}

fn criterion_6() -> Outcome {
    timed(6, "end-to-end desk run: seed, tick, results, export, report, replay", Some(Duration::from_secs(10)), || {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let store = dir.path().join("store");
        let store = store.to_str().ok_or("non-UTF-8 temp path")?;
        let out = dir.path().join("exports");
        let out = out.to_str().ok_or("non-UTF-8 temp path")?;

        let seed: serde_json::Value =
            stdout_json(&["--store", store, "--seed", "7", "--format", "json", "seed", "covid-fixture"])?;
        let campaign = CampaignId::from(seed["campaign_id"].as_str().ok_or("seed report lacks campaign_id")?);
        let ballots = seed["ballots"].as_u64().unwrap_or(0);
        if ballots != (FIXTURE_VOTERS * 4 * 4) as u64 {
            return Err(format!("seeded {ballots} ballots"));
        }

        let tallied: serde_json::Value =
            stdout_json(&["--store", store, "--at", CLOSE, "--format", "json", "tally", "--now"])?;
        if tallied["tallied"] != serde_json::json!([campaign.as_str()]) {
            return Err(format!("tick tallied {}", tallied["tallied"]));
        }

        let results: ResultSet =
            stdout_json(&["--store", store, "--format", "json", "results", campaign.as_str()])?;
        if results.interim || results.tallies.len() != 16 {
            return Err(format!("results interim={} with {} tallies", results.interim, results.tallies.len()));
        }
        if let Some(t) = results.tallies.iter().find(|t| t.counted_ballots != FIXTURE_VOTERS as u64) {
            return Err(format!("{}/{} counted {}", t.question_id, t.method, t.counted_ballots));
        }

        votelab(&["--store", store, "export", campaign.as_str(), "all", "-o", out])?;
        let pepper = EngineConfig::default().identity_pepper;
        let hashes: Vec<String> = (1..=FIXTURE_VOTERS)
            .map(|v| hash_email(&pepper, &format!("voter-{v:03}@{FIXTURE_EMAIL_DOMAIN}")))
            .collect();
        let mut rows = Vec::new();
        for kind in ExportKind::ALL {
            let path = Path::new(out).join(format!("{campaign}-{kind}.csv"));
            rows.push(format!("{kind} {}", check_export(&path, &campaign, kind, &hashes)?));
        }

        let reports: Vec<ConsistencyReport> = stdout_json(&[
            "--store",
            store,
            "--format",
            "json",
            "report",
            "consistency",
            campaign.as_str(),
        ])?;
        check_goldens(&reports)?;

        votelab(&["--store", store, "replay", "verify"])?;
        let live = String::from_utf8_lossy(&votelab(&["--store", store, "state-hash"])?.stdout).to_string();
        let live_hash = live.split_whitespace().next().unwrap_or_default().to_string();
        let reopened = Platform::open(
            Box::new(FileEventStore::open(Path::new(store)).map_err(|e| e.to_string())?),
            EngineConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let replayed = reopened.replayed_state_hash().map_err(|e| e.to_string())?;
        if replayed != live_hash {
            return Err(format!("replayed hash {replayed} != live {live_hash}"));
        }
        Ok(format!("exports: {}; state {}", rows.join(", "), &live_hash[..12]))
    })
}

fn main() {
    // libtest-style flags (e.g. --nocapture, filters) are accepted and ignored
    let outcomes = [criterion_1(), criterion_2(), criterion_3(), criterion_4(), criterion_5(), criterion_6()];
    let mut failed = 0;
    for o in &outcomes {
        let (tag, detail) = match &o.result {
            Ok(d) => ("PASS", d.clone()),
            Err(e) => {
                failed += 1;
                ("FAIL", e.clone())
            }
        };
        println!(
            "{tag} criterion {}: {} [{:.2}s] {}",
            o.id,
            o.name,
            o.elapsed.as_secs_f64(),
            detail
        );
    }
    println!("acceptance: {} passed, {} failed", outcomes.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
