//! The `votelab` operator command line.
//!
//! Every command runs either against a store opened in-process (`--store`)
//! or against a running API server (`--api-url`). Both paths go through
//! [`Backend`], so their outputs are byte-for-byte comparable.

pub mod backend;
pub mod config;
pub mod error;
pub mod remote;
pub mod render;

use std::io::Write;
use std::path::PathBuf;
use std::time::Duration;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};

use votelab_core::consistency::{reports_by_question, RankingBasis};
use votelab_core::engine::{EngineConfig, ResultSet, Timestamp};
use votelab_core::export::{consistency_table, results_table, ExportFormat, ExportKind};
use votelab_core::fixture::{self, FIXTURE_VOTERS};
use votelab_core::ids::CampaignId;

pub use backend::{Backend, Embedded};
pub use config::{FileConfig, DEFAULT_STORE};
pub use error::CliError;
pub use remote::Remote;

#[derive(Debug, Parser)]
#[command(name = "votelab", version, about = "Seed, tally, export and verify votelab campaigns")]
pub struct Cli {
    /// Event store: a directory, `file:<dir>`, `sqlite:<path>` or `memory:`.
    #[arg(long, global = true, env = "VOTELAB_STORE")]
    pub store: Option<String>,
    /// Base URL of a running API server; used instead of a local store.
    #[arg(long, global = true, env = "VOTELAB_API_URL")]
    pub api_url: Option<String>,
    /// Admin bearer token for `--api-url`.
    #[arg(long, global = true, env = "VOTELAB_API_TOKEN", hide_env_values = true)]
    pub api_token: Option<String>,
    /// TOML config file (`store`, `api_url`, `api_token`, `[engine]`).
    #[arg(long, global = true, env = "VOTELAB_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Seed for fixture synthesis.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Evaluate as of this instant (RFC 3339) instead of the wall clock.
    #[arg(long, global = true, value_parser = parse_time)]
    pub at: Option<Timestamp>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a synthetic fixture into an empty store.
    Seed {
        #[command(subcommand)]
        fixture: SeedFixture,
    },
    /// Close, tally and release campaigns whose close time has passed.
    Tally(TallyArgs),
    /// List campaigns.
    Campaigns,
    /// Show a campaign's results; interim figures when it is not tallied yet.
    Results {
        campaign: String,
        #[arg(long)]
        interim: bool,
    },
    /// Write research datasets (`ballots`, `traces`, `results`, `feedback`,
    /// `consistency` or `all`).
    Export {
        campaign: String,
        kind: String,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        #[arg(long)]
        interim: bool,
    },
    /// Consistency reports
    #[command(subcommand)]
    Report(Report),
    /// Print the canonical state hash.
    StateHash,
    /// Check the event log against the live state
    #[command(subcommand)]
    Replay(Replay),
}

#[derive(Debug, Subcommand)]
pub enum SeedFixture {
    /// The four-question COVID campaign with 120 synthetic voters.
    CovidFixture {
        /// Delete existing events first.
        #[arg(long)]
        reset: bool,
        #[arg(long, default_value_t = FIXTURE_VOTERS)]
        voters: usize,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct TallyArgs {
    /// Run a single scheduler pass.
    #[arg(long)]
    pub now: bool,
    /// Keep running scheduler passes.
    #[arg(long)]
    pub watch: bool,
}

#[derive(Debug, Subcommand)]
pub enum Report {
    /// Per-rank consistency across methods for each question of a campaign.
    Consistency {
        campaign: String,
        #[arg(long, default_value = "aggregate", value_parser = parse_basis)]
        basis: RankingBasis,
        #[arg(long)]
        interim: bool,
    },
    /// Consistency of the published reference table.
    Published,
}

#[derive(Debug, Subcommand)]
pub enum Replay {
    /// Replay the whole event log and compare with the live state hash.
    Verify,
}

fn parse_time(s: &str) -> Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("{s:?}: {e}"))
}

fn parse_basis(s: &str) -> Result<RankingBasis, String> {
    s.parse()
}

/// Settings after merging flags, environment and the config file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub store: String,
    pub api_url: Option<String>,
    pub api_token: Option<String>,
    pub engine: EngineConfig,
}

impl Cli {
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        if self.store.is_some() && self.api_url.is_some() {
            return Err(CliError::Usage("pass either --store or --api-url, not both".into()));
        }
        let api_url = if self.store.is_some() {
            None
        } else {
            self.api_url.clone().or(file.api_url)
        };
        Ok(Resolved {
            store: self
                .store
                .clone()
                .or(file.store)
                .unwrap_or_else(|| DEFAULT_STORE.to_string()),
            api_url,
            api_token: self.api_token.clone().or(file.api_token),
            engine: file.engine,
        })
    }
}

fn connect(settings: &Resolved) -> Result<Box<dyn Backend>, CliError> {
    Ok(match &settings.api_url {
        Some(url) => Box::new(Remote::new(url, settings.api_token.clone())?),
        None => Box::new(Embedded::open(&settings.store, settings.engine.clone())?),
    })
}

const INTERIM_BANNER: &str = "INTERIM RESULTS: campaign";

fn banner(err: &mut dyn Write, rs: &ResultSet) -> Result<(), CliError> {
    if rs.interim {
        writeln!(
            err,
            "{INTERIM_BANNER} {} is not tallied; figures computed at {} will change",
            rs.campaign_id,
            votelab_core::export::timestamp(&rs.computed_at)
        )?;
    }
    Ok(())
}

/// Final results when frozen, otherwise a fresh interim computation.
fn results_for(
    backend: &dyn Backend,
    campaign: &CampaignId,
    interim: bool,
    now: Timestamp,
) -> Result<ResultSet, CliError> {
    if interim {
        return backend.interim_results(campaign, now);
    }
    match backend.final_results(campaign) {
        Err(e) if e.code() == "ResultsNotReady" => backend.interim_results(campaign, now),
        other => other,
    }
}

/// Runs one parsed command, writing its output to `out` and notices to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let settings = cli.resolve()?;
    let now = cli.at.unwrap_or_else(Utc::now);
    match &cli.command {
        Command::Seed {
            fixture: SeedFixture::CovidFixture { reset, voters },
        } => {
            if *reset {
                if settings.api_url.is_some() {
                    return Err(CliError::Usage("--reset only works on a local store".into()));
                }
                Embedded::reset(&settings.store)?;
            }
            let report = connect(&settings)?.seed_covid(cli.seed, *voters)?;
            match cli.format {
                Format::Json => render::json(out, &report),
                _ => render::seed_report(out, &report),
            }
        }
        Command::Tally(args) => {
            let backend = connect(&settings)?;
            if args.now {
                let tallied = backend.tick(now)?;
                return match cli.format {
                    Format::Json => render::json(out, &serde_json::json!({ "tallied": tallied })),
                    _ => {
                        if tallied.is_empty() {
                            writeln!(err, "nothing to tally")?;
                        }
                        for c in tallied {
                            writeln!(out, "tallied {c}")?;
                        }
                        Ok(())
                    }
                };
            }
            let period = Duration::from_secs(settings.engine.scheduler_period_secs.max(1));
            loop {
                let at = cli.at.unwrap_or_else(Utc::now);
                match backend.tick(at) {
                    Ok(tallied) => {
                        for c in tallied {
                            writeln!(out, "tallied {c}")?;
                            out.flush()?;
                        }
                    }
                    Err(e) => tracing::warn!(error = %e, "scheduler pass failed"),
                }
                std::thread::sleep(period);
            }
        }
        Command::Campaigns => {
            let list = connect(&settings)?.campaigns()?;
            match cli.format {
                Format::Json => render::json(out, &list),
                _ => render::campaigns(out, &list),
            }
        }
        Command::Results { campaign, interim } => {
            let backend = connect(&settings)?;
            let rs = results_for(backend.as_ref(), &CampaignId::from(campaign.as_str()), *interim, now)?;
            banner(err, &rs)?;
            match cli.format {
                Format::Json => render::json(out, &rs),
                Format::Csv => Ok(write!(out, "{}", results_table(&rs).to_csv()?)?),
                Format::Text => render::results(out, &rs),
            }
        }
        Command::Export {
            campaign,
            kind,
            out: dir,
            interim,
        } => {
            let kinds: Vec<ExportKind> = if kind == "all" {
                ExportKind::ALL.to_vec()
            } else {
                vec![kind.parse().map_err(CliError::Usage)?]
            };
            let format = match cli.format {
                Format::Json => ExportFormat::Json,
                _ => ExportFormat::Csv,
            };
            let backend = connect(&settings)?;
            let campaign = CampaignId::from(campaign.as_str());
            std::fs::create_dir_all(dir)?;
            if *interim {
                writeln!(err, "{INTERIM_BANNER} {campaign} exported with interim figures")?;
            }
            for k in kinds {
                let table = backend.export(&campaign, k, *interim, now)?;
                let path = table.write_to(dir, format)?;
                writeln!(out, "{}\t{} rows", path.display(), table.rows.len())?;
            }
            Ok(())
        }
        Command::Report(Report::Consistency {
            campaign,
            basis,
            interim,
        }) => {
            let backend = connect(&settings)?;
            let rs = results_for(backend.as_ref(), &CampaignId::from(campaign.as_str()), *interim, now)?;
            banner(err, &rs)?;
            let reports = reports_by_question(&rs.tallies, *basis);
            match cli.format {
                Format::Json => render::json(out, &reports),
                Format::Csv => Ok(write!(
                    out,
                    "{}",
                    consistency_table(rs.campaign_id.clone(), rs.interim, &reports).to_csv()?
                )?),
                Format::Text => render::consistency(out, &reports),
            }
        }
        Command::Report(Report::Published) => {
            let reports = fixture::published_consistency();
            match cli.format {
                Format::Json => render::json(out, &reports),
                Format::Csv => Ok(write!(
                    out,
                    "{}",
                    consistency_table(CampaignId::from("published"), false, &reports).to_csv()?
                )?),
                Format::Text => render::consistency(out, &reports),
            }
        }
        Command::StateHash => {
            let state = connect(&settings)?.state()?;
            match cli.format {
                Format::Json => render::json(out, &state),
                _ => render::state(out, &state),
            }
        }
        Command::Replay(Replay::Verify) => {
            let state = connect(&settings)?.state()?;
            if !state.consistent() {
                return Err(CliError::ReplayMismatch {
                    live: state.state_hash,
                    replayed: state.replayed_state_hash,
                });
            }
            match cli.format {
                Format::Json => render::json(out, &state),
                _ => Ok(writeln!(out, "ok {} after {} events", state.state_hash, state.last_seq)?),
            }
        }
    }
}

/// Parses `args` (including the program name) and runs them, returning the
/// process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match run(&cli, out, err) {
        Ok(()) => 0,
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}
