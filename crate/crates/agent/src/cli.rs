//! Command-line front end. Exit codes: 0 success, 1 usage or validation
//! error, 2 I/O error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::time::Duration;

use chrono::Utc;
use clap::{Parser, Subcommand};
use ensemble_audit::adapters::{validate_job, RegistryError, ToolRegistry, ViolationLevel};
use ensemble_audit::ensemble::{CatalogError, IssueCatalog};
use ensemble_audit::jobgen::{make_jobs, merge, partition, reconstruct_job, Script, TargetList};
use ensemble_audit::model::{format_timestamp, parse_job, parse_report, serialize_job, serialize_report, Job, Report};
use ensemble_audit::reporting::{compare_html, digest_html, export_scores, ComparisonRow};
use ensemble_audit::runner::{run_job, RunContext, SystemClock};
use ensemble_audit::scoring::{rank_by, score_report};

use crate::agent::{Agent, AgentConfig, DEFAULT_POLL_SECONDS};
use crate::server::serve;

#[derive(Debug, Parser)]
#[command(name = "ensemble-audit", version, about = "Run web-accessibility tools as one ensemble")]
pub struct Cli {
    /// Tool registry file (defaults to the built-in configuration).
    #[arg(long, global = true, value_name = "FILE")]
    tools: Option<PathBuf>,
    /// Issue catalog file (defaults to the starter catalog).
    #[arg(long, global = true, value_name = "FILE")]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a job and write its report.
    Run {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Agent name recorded in the report.
        #[arg(long, env = "ENSEMBLE_AGENT_ID", default_value = "local")]
        agent: String,
    },
    /// Turn a script and a target list into one job per target.
    MakeJobs {
        #[arg(long)]
        script: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Job time stamp (defaults to now).
        #[arg(long)]
        time_stamp: Option<String>,
    },
    /// Split a job's test acts across shards.
    Partition {
        #[arg(long)]
        job: PathBuf,
        #[arg(long)]
        shards: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Merge shard reports into one report.
    Merge {
        #[arg(long)]
        out: PathBuf,
        /// The unpartitioned job (reconstructed from the shards if omitted).
        #[arg(long)]
        job: Option<PathBuf>,
        #[arg(required = true)]
        shards: Vec<PathBuf>,
    },
    /// Write an HTML digest of a report.
    Digest {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank reports by score into a comparative HTML page.
    Compare {
        #[arg(long)]
        out: PathBuf,
        /// Also write the ranking as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Print a report's score as JSON.
    Score {
        #[arg(long)]
        report: PathBuf,
    },
    /// Poll a job server and perform its jobs.
    Agent {
        #[arg(long, env = "ENSEMBLE_SERVER_URL")]
        server: String,
        #[arg(long, env = "ENSEMBLE_AGENT_ID", default_value = "agent")]
        id: String,
        #[arg(long, env = "ENSEMBLE_POLL_SECONDS", default_value_t = DEFAULT_POLL_SECONDS)]
        poll: u64,
        /// Directory for reports the server would not accept.
        #[arg(long, default_value = "undelivered")]
        undelivered: PathBuf,
    },
    /// Serve the job queue and report store.
    Serve {
        #[arg(long)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Io(_) => 2,
        }
    }
}

impl From<RegistryError> for CliError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

impl From<CatalogError> for CliError {
    fn from(e: CatalogError) -> Self {
        match e {
            CatalogError::Io { .. } => CliError::Io(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}

fn invalid(e: impl ToString) -> CliError {
    CliError::Invalid(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn load_job(path: &Path) -> Result<Job, CliError> {
    parse_job(&read(path)?).map_err(|errors| {
        let lines: Vec<String> = errors.iter().map(|e| format!("{}: {e}", path.display())).collect();
        CliError::Invalid(lines.join("\n"))
    })
}

fn load_report(path: &Path) -> Result<Report, CliError> {
    parse_report(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

impl Cli {
    fn registry(&self) -> Result<ToolRegistry, CliError> {
        match &self.tools {
            Some(path) => Ok(ToolRegistry::load(path)?),
            None => Ok(ToolRegistry::default_config()),
        }
    }

    fn catalog(&self) -> Result<IssueCatalog, CliError> {
        match &self.catalog {
            Some(path) => Ok(IssueCatalog::load(path)?),
            None => Ok(IssueCatalog::starter()),
        }
    }
}

/// Name of the target a report is about: the target list entry it was made
/// from, else the job id.
fn target_id(report: &Report) -> String {
    report
        .job
        .extras
        .get("sources")
        .and_then(|s| s.get("target"))
        .and_then(|t| t.as_str())
        .map_or_else(|| report.job.id.clone(), str::to_string)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Run { job, out, agent } => {
            let job = load_job(job)?;
            let registry = cli.registry()?;
            let violations = validate_job(&job, &registry);
            for v in &violations {
                eprintln!("act {}: {:?}: {}", v.act, v.level, v.message);
            }
            if violations.iter().any(|v| v.level == ViolationLevel::Error) {
                return Err(invalid(format!("job {} is invalid", job.id)));
            }
            let clock = SystemClock;
            let report = run_job(&job, &registry, &RunContext::new(agent.clone(), &clock)).map_err(invalid)?;
            write(out, &serialize_report(&report))
        }
        Command::MakeJobs { script, targets, out_dir, time_stamp } => {
            let script: Script = load_json(script)?;
            let targets: TargetList = load_json(targets)?;
            let stamp = time_stamp.clone().unwrap_or_else(|| format_timestamp(Utc::now()));
            for job in make_jobs(&script, &targets, &stamp).map_err(invalid)? {
                write(&out_dir.join(format!("{}.json", job.id)), &serialize_job(&job))?;
                println!("{}", job.id);
            }
            Ok(())
        }
        Command::Partition { job, shards, out_dir } => {
            if *shards == 0 {
                return Err(invalid("--shards must be at least 1"));
            }
            let job = load_job(job)?;
            for shard in partition(&job, *shards) {
                write(&out_dir.join(format!("{}.json", shard.id)), &serialize_job(&shard))?;
                println!("{}", shard.id);
            }
            Ok(())
        }
        Command::Merge { out, job, shards } => {
            let reports = shards.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
            let original = match job {
                Some(path) => load_job(path)?,
                None => reconstruct_job(&reports).map_err(invalid)?,
            };
            let merged = merge(&reports, &original).map_err(invalid)?;
            write(out, &serialize_report(&merged))
        }
        Command::Digest { report, out } => {
            let report = load_report(report)?;
            write(out, &digest_html(&report, &cli.catalog()?))
        }
        Command::Compare { out, csv, reports } => {
            let catalog = cli.catalog()?;
            let mut rows = Vec::new();
            for path in reports {
                let report = load_report(path)?;
                let row = ComparisonRow {
                    url: report.job.target.url.clone(),
                    score: score_report(&report, &catalog).total,
                    error_count: report.job_data.error_count,
                };
                rows.push((target_id(&report), row));
            }
            let ranked = rank_by(rows, |r| r.score).map_err(invalid)?;
            write(out, &compare_html(&ranked).map_err(invalid)?)?;
            if let Some(csv) = csv {
                write(csv, &export_scores(&ranked))?;
            }
            Ok(())
        }
        Command::Score { report } => {
            let score = score_report(&load_report(report)?, &cli.catalog()?);
            println!("{}", serde_json::to_string_pretty(&score).expect("serializable"));
            Ok(())
        }
        Command::Agent { server, id, poll, undelivered } => {
            let mut config = AgentConfig::new(server, id);
            config.poll = Duration::from_secs(*poll);
            config.undelivered_dir = undelivered.clone();
            let agent = Agent::new(config, cli.registry()?);
            log::info!("agent {id} polling {server} every {poll} s");
            agent.run(&AtomicBool::new(false));
            Ok(())
        }
        Command::Serve { port, data, host } => {
            let handle = serve(host, *port, data).map_err(|e| CliError::Io(e.to_string()))?;
            println!("listening on {}", handle.url());
            handle.wait();
            Ok(())
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["ensemble-audit", "run", "--out", "x.json"]), 1);
        assert_eq!(run(["ensemble-audit", "frobnicate"]), 1);
        assert_eq!(run(["ensemble-audit"]), 1);
        assert_eq!(run(["ensemble-audit", "--help"]), 0);
    }

    #[test]
    fn missing_files_exit_2() {
        assert_eq!(run(["ensemble-audit", "score", "--report", "/nonexistent/r.json"]), 2);
    }
}
