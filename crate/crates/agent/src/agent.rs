//! Polling agent: asks a job server for work, runs it, posts the report.

use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use ensemble_audit::adapters::ToolRegistry;
use ensemble_audit::model::{job_from_value, serialize_report, Report};
use ensemble_audit::runner::{run_job, RunContext, SystemClock};

pub const DEFAULT_POLL_SECONDS: u64 = 30;
const HTTP_TIMEOUT: Duration = Duration::from_secs(30);

pub struct AgentConfig {
    pub server_url: String,
    pub agent_id: String,
    pub poll: Duration,
    /// Where reports go when the server will not take them.
    pub undelivered_dir: PathBuf,
}

impl AgentConfig {
    pub fn new(server_url: &str, agent_id: &str) -> Self {
        AgentConfig {
            server_url: server_url.trim_end_matches('/').to_string(),
            agent_id: agent_id.to_string(),
            poll: Duration::from_secs(DEFAULT_POLL_SECONDS),
            undelivered_dir: PathBuf::from("undelivered"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PollOutcome {
    /// The queue was empty.
    Idle,
    /// A job ran and its report reached the server.
    Delivered(String),
    /// A job ran but its report was saved locally instead.
    Undelivered(String, PathBuf),
    /// The server could not be reached or sent something unusable.
    Failed(String),
}

pub struct Agent {
    config: AgentConfig,
    registry: ToolRegistry,
    http: ureq::Agent,
}

impl Agent {
    pub fn new(config: AgentConfig, registry: ToolRegistry) -> Self {
        let http = ureq::Agent::config_builder()
            .timeout_global(Some(HTTP_TIMEOUT))
            .http_status_as_error(false)
            .build()
            .into();
        Agent { config, registry, http }
    }

    /// Fetches and performs at most one job.
    pub fn poll_once(&self) -> PollOutcome {
        let url = format!("{}/api/job", self.config.server_url);
        let mut response = match self.http.get(&url).query("agent", &self.config.agent_id).call() {
            Ok(r) => r,
            Err(e) => return PollOutcome::Failed(format!("cannot reach server: {e}")),
        };
        match response.status().as_u16() {
            204 => return PollOutcome::Idle,
            200 => {}
            other => return PollOutcome::Failed(format!("server answered {other}")),
        }
        let body = match response.body_mut().read_to_string() {
            Ok(b) => b,
            Err(e) => return PollOutcome::Failed(format!("cannot read job: {e}")),
        };
        let job = match serde_json::from_str(&body).map_err(|e| e.to_string()).and_then(|v| {
            job_from_value(v).map_err(|errs| errs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
        }) {
            Ok(job) => job,
            Err(e) => return PollOutcome::Failed(format!("unusable job: {e}")),
        };
        log::info!("running job {}", job.id);
        let clock = SystemClock;
        let ctx = RunContext::new(self.config.agent_id.clone(), &clock);
        let report = match run_job(&job, &self.registry, &ctx) {
            Ok(r) => r,
            Err(e) => return PollOutcome::Failed(format!("job {} failed: {e}", job.id)),
        };
        self.deliver(&report)
    }

    fn post_report(&self, body: &str) -> Result<(), String> {
        let url = format!("{}/api/reports", self.config.server_url);
        let response = self
            .http
            .post(&url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        match response.status().as_u16() {
            200..=299 => Ok(()),
            other => Err(format!("server answered {other}")),
        }
    }

    /// Posts a report, retrying once, and falls back to a local file.
    fn deliver(&self, report: &Report) -> PollOutcome {
        let id = report.job.id.clone();
        let body = serialize_report(report);
        let mut last_error = String::new();
        for attempt in 1..=2 {
            match self.post_report(&body) {
                Ok(()) => return PollOutcome::Delivered(id),
                Err(e) => {
                    log::warn!("posting report {id} failed (attempt {attempt}): {e}");
                    last_error = e;
                }
            }
        }
        let path = self.config.undelivered_dir.join(format!("{id}.json"));
        match fs::create_dir_all(&self.config.undelivered_dir).and_then(|_| fs::write(&path, &body)) {
            Ok(()) => PollOutcome::Undelivered(id, path),
            Err(e) => PollOutcome::Failed(format!("report {id} lost: {last_error}; cannot save it: {e}")),
        }
    }

    /// Polls until `stop` is set. After an idle poll or an error the agent
    /// sleeps for the poll interval; after a job it polls again at once.
    pub fn run(&self, stop: &AtomicBool) {
        while !stop.load(Ordering::SeqCst) {
            let outcome = self.poll_once();
            match &outcome {
                PollOutcome::Idle => {}
                PollOutcome::Delivered(id) => log::info!("delivered report {id}"),
                PollOutcome::Undelivered(id, path) => log::error!("report {id} saved to {}", path.display()),
                PollOutcome::Failed(e) => log::warn!("{e}"),
            }
            if matches!(outcome, PollOutcome::Idle | PollOutcome::Failed(_)) {
                sleep_unless_stopped(self.config.poll, stop);
            }
        }
    }
}

fn sleep_unless_stopped(duration: Duration, stop: &AtomicBool) {
    let deadline = Instant::now() + duration;
    while !stop.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        std::thread::sleep((deadline - now).min(Duration::from_millis(20)));
    }
}
