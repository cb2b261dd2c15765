use std::io::Write;

use votelab_core::consistency::ConsistencyReport;
use votelab_core::engine::{Campaign, ResultSet, StateReport};
use votelab_core::export::timestamp;
use votelab_core::fixture::SeedReport;
use votelab_core::rational::to_decimal_string;

use crate::error::CliError;

pub fn json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn seed_report(out: &mut dyn Write, r: &SeedReport) -> Result<(), CliError> {
    writeln!(
        out,
        "seeded {}: {} voters, {} ballots ({} with an earlier revision), last activity {}",
        r.campaign_id,
        r.voters.len(),
        r.ballots,
        r.revisions,
        timestamp(&r.last_activity)
    )?;
    Ok(())
}

pub fn campaigns(out: &mut dyn Write, list: &[Campaign]) -> Result<(), CliError> {
    writeln!(out, "{:<10} {:<9} {:<24} {:<24} title", "campaign", "status", "open_at", "close_at")?;
    for c in list {
        writeln!(
            out,
            "{:<10} {:<9} {:<24} {:<24} {}",
            c.campaign_id.to_string(),
            format!("{:?}", c.status).to_lowercase(),
            timestamp(&c.open_at),
            timestamp(&c.close_at),
            c.title
        )?;
    }
    Ok(())
}

pub fn results(out: &mut dyn Write, rs: &ResultSet) -> Result<(), CliError> {
    writeln!(
        out,
        "campaign {} ({} results computed {})",
        rs.campaign_id,
        if rs.interim { "interim" } else { "final" },
        timestamp(&rs.computed_at)
    )?;
    for t in &rs.tallies {
        writeln!(out)?;
        writeln!(out, "{} / {}  ({} ballots)", t.question_id, t.method, t.counted_ballots)?;
        for (rank, group) in t.ranking.iter().enumerate() {
            for option in group {
                let i = t.options.iter().position(|o| o == option).unwrap_or(0);
                let share = t
                    .shares
                    .as_ref()
                    .map(|s| format!("{}%", to_decimal_string(&s[i], 2)))
                    .unwrap_or_else(|| "-".into());
                writeln!(
                    out,
                    "  {:>2}  {:<8} {:>8}  aggregate {}",
                    rank + 1,
                    option.to_string(),
                    share,
                    to_decimal_string(&t.aggregates[i], 4)
                )?;
            }
        }
    }
    if !rs.consistency.is_empty() {
        writeln!(out)?;
        consistency(out, &rs.consistency)?;
    }
    Ok(())
}

pub fn consistency(out: &mut dyn Write, reports: &[ConsistencyReport]) -> Result<(), CliError> {
    let ranks = reports.iter().map(|r| r.per_rank.len()).max().unwrap_or(0);
    write!(out, "{:<12} {:<13}", "question", "basis")?;
    for k in 1..=ranks {
        write!(out, " {:>6}", format!("c{k}"))?;
    }
    writeln!(out, " {:>6}", "mean")?;
    for r in reports {
        write!(out, "{:<12} {:<13}", r.question_id.to_string(), r.basis.to_string())?;
        for c in &r.per_rank {
            write!(out, " {:>6}", to_decimal_string(c, 4))?;
        }
        for _ in r.per_rank.len()..ranks {
            write!(out, " {:>6}", "")?;
        }
        writeln!(out, " {:>6}", to_decimal_string(&r.mean, 4))?;
    }
    Ok(())
}

pub fn state(out: &mut dyn Write, s: &StateReport) -> Result<(), CliError> {
    writeln!(out, "{}  seq {}  {}", s.state_hash, s.last_seq, s.store)?;
    Ok(())
}
