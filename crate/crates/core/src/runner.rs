//! Executes a job's acts in order and produces its report.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde_json::Value;

use crate::adapters::{invoke_tool, normalize_payload, ToolKind, ToolRegistry};
use crate::dom::{parse_html, DocTree};
use crate::model::{Act, ActResult, ActType, Browser, Job, Report, ToolResult};
use crate::reporting::{elaborate, ReportError, RunEnv};

pub const DEFAULT_NAVIGATE_TIMEOUT: Duration = Duration::from_secs(15);
pub const DEFAULT_CONCURRENCY: usize = 4;

/// Source of wall-clock time, replaceable in tests.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, duration: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, duration: Duration) {
        thread::sleep(duration);
    }
}

/// A clock that only moves when slept on, plus a fixed step per reading.
#[derive(Debug)]
pub struct FakeClock {
    now: Mutex<DateTime<Utc>>,
    step: chrono::Duration,
}

impl FakeClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        FakeClock {
            now: Mutex::new(start),
            step: chrono::Duration::from_std(step).unwrap_or_default(),
        }
    }
}

impl Clock for FakeClock {
    fn now(&self) -> DateTime<Utc> {
        let mut now = self.now.lock().expect("clock lock");
        let current = *now;
        *now += self.step;
        current
    }

    fn sleep(&self, duration: Duration) {
        let mut now = self.now.lock().expect("clock lock");
        *now += chrono::Duration::from_std(duration).unwrap_or_default();
    }
}

pub struct RunContext<'a> {
    pub agent: String,
    pub clock: &'a dyn Clock,
    pub navigate_timeout: Duration,
    /// Upper bound on external tools run at once.
    pub concurrency: usize,
}

impl<'a> RunContext<'a> {
    pub fn new(agent: impl Into<String>, clock: &'a dyn Clock) -> Self {
        RunContext {
            agent: agent.into(),
            clock,
            navigate_timeout: DEFAULT_NAVIGATE_TIMEOUT,
            concurrency: DEFAULT_CONCURRENCY,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// The page under test after a navigate act.
enum Page {
    NotLoaded,
    Loaded { url: String, tree: Option<DocTree> },
    Failed(String),
}

/// Fetches a page body. `file://` URLs are read from disk.
pub fn fetch_page(url: &str, timeout: Duration) -> Result<(String, Option<u16>), String> {
    let parsed = url::Url::parse(url).map_err(|e| format!("bad URL {url}: {e}"))?;
    match parsed.scheme() {
        "file" => {
            let path = parsed.to_file_path().map_err(|_| format!("bad file URL {url}"))?;
            std::fs::read_to_string(&path)
                .map(|text| (text, None))
                .map_err(|e| format!("{}: {e}", path.display()))
        }
        "http" | "https" => {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into();
            let mut response = agent.get(url).call().map_err(|e| match e {
                ureq::Error::Timeout(_) => "timeout".to_string(),
                other => format!("connection failed: {other}"),
            })?;
            let status = response.status().as_u16();
            if status >= 400 {
                return Err(format!("HTTP status {status}"));
            }
            let body = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
            Ok((body, Some(status)))
        }
        other => Err(format!("unsupported scheme {other}")),
    }
}

fn millis_since(start: Instant) -> u64 {
    start.elapsed().as_millis() as u64
}

fn run_builtin(registry: &ToolRegistry, act: &Act, page: &Page) -> ToolResult {
    let code = act.tool();
    let start = Instant::now();
    let tree = match page {
        Page::Loaded { tree: Some(tree), .. } => tree,
        Page::Loaded { tree: None, .. } => return ToolResult::failed(code, "page has no HTML content", 0),
        Page::NotLoaded => return ToolResult::failed(code, "no page loaded", 0),
        Page::Failed(e) => return ToolResult::failed(code, format!("navigation failed: {e}"), 0),
    };
    match registry.native_rules().run(tree, act.rules.as_deref()) {
        Ok(standard) => ToolResult {
            tool_code: code.to_string(),
            native: serde_json::to_value(&standard).unwrap_or(Value::Null),
            standard,
            elapsed_millis: millis_since(start),
            error: None,
        },
        Err(e) => ToolResult::failed(code, e.to_string(), millis_since(start)),
    }
}

fn run_external(registry: &ToolRegistry, act: &Act, page_url: &str, browser: Browser) -> ToolResult {
    let code = act.tool();
    let Some(spec) = registry.get(code) else {
        return ToolResult::failed(code, format!("unknown tool {code}"), 0);
    };
    let start = Instant::now();
    match invoke_tool(spec, page_url, act, Some(browser.as_str())) {
        Ok(native) => {
            let normalized = normalize_payload(spec, &native.payload);
            for w in &normalized.warnings {
                log::warn!("{code}: {w}");
            }
            ToolResult {
                tool_code: code.to_string(),
                native: native.payload,
                standard: normalized.standard,
                elapsed_millis: millis_since(start),
                error: normalized.error,
            }
        }
        Err(e) => ToolResult::failed(code, e.to_string(), millis_since(start)),
    }
}

fn is_external(registry: &ToolRegistry, act: &Act) -> bool {
    act.is_test() && registry.get(act.tool()).is_some_and(|s| s.kind != ToolKind::Builtin)
}

/// Runs every act of `job` and returns the elaborated report.
///
/// Consecutive external test acts run concurrently, bounded by the context's
/// concurrency limit; results are always recorded in act order. Once a
/// navigate act fails, every later test act is prevented.
pub fn run_job(job: &Job, registry: &ToolRegistry, ctx: &RunContext) -> Result<Report, RunError> {
    let started = ctx.clock.now();
    let mut results: Vec<ActResult> = Vec::with_capacity(job.acts.len());
    let mut page = Page::NotLoaded;
    let mut browser = Browser::Chromium;
    let mut i = 0;
    while i < job.acts.len() {
        let act = &job.acts[i];
        match act.act_type {
            ActType::Launch => {
                browser = act.browser.unwrap_or(Browser::Chromium);
                results.push(ActResult::Launch { browser });
            }
            ActType::Wait => {
                let millis = act.options.get("millis").and_then(|m| m.parse().ok()).unwrap_or(0);
                ctx.clock.sleep(Duration::from_millis(millis));
                results.push(ActResult::Wait { millis });
            }
            ActType::Navigate => {
                let url = act.url.clone().unwrap_or_else(|| job.target.url.clone());
                if let Page::Failed(_) = page {
                    results.push(ActResult::Navigation {
                        url,
                        ok: false,
                        status: None,
                        error: Some("skipped after an earlier navigation failure".into()),
                    });
                } else {
                    match fetch_page(&url, ctx.navigate_timeout) {
                        Ok((body, status)) => {
                            results.push(ActResult::Navigation { url: url.clone(), ok: true, status, error: None });
                            page = Page::Loaded { url, tree: parse_html(&body).ok() };
                        }
                        Err(e) => {
                            log::warn!("navigation to {url} failed: {e}");
                            results.push(ActResult::Navigation { url, ok: false, status: None, error: Some(e.clone()) });
                            page = Page::Failed(e);
                        }
                    }
                }
            }
            ActType::Test if !is_external(registry, act) => {
                let result = if registry.get(act.tool()).is_none() {
                    ToolResult::failed(act.tool(), format!("unknown tool {}", act.tool()), 0)
                } else {
                    run_builtin(registry, act, &page)
                };
                results.push(ActResult::Tool(result));
            }
            ActType::Test => {
                let end = job.acts[i..]
                    .iter()
                    .position(|a| !is_external(registry, a))
                    .map_or(job.acts.len(), |n| i + n);
                let batch = &job.acts[i..end];
                match &page {
                    Page::Failed(e) => {
                        for a in batch {
                            let r = ToolResult::failed(a.tool(), format!("navigation failed: {e}"), 0);
                            results.push(ActResult::Tool(r));
                        }
                    }
                    _ => {
                        let url = match &page {
                            Page::Loaded { url, .. } => url.as_str(),
                            _ => job.target.url.as_str(),
                        };
                        for chunk in batch.chunks(ctx.concurrency.max(1)) {
                            let outcomes: Vec<ToolResult> = thread::scope(|s| {
                                let handles: Vec<_> = chunk
                                    .iter()
                                    .map(|a| s.spawn(move || run_external(registry, a, url, browser)))
                                    .collect();
                                handles
                                    .into_iter()
                                    .zip(chunk)
                                    .map(|(h, a)| {
                                        h.join()
                                            .unwrap_or_else(|_| ToolResult::failed(a.tool(), "tool adapter panicked", 0))
                                    })
                                    .collect()
                            });
                            results.extend(outcomes.into_iter().map(ActResult::Tool));
                        }
                    }
                }
                i = end;
                continue;
            }
        }
        i += 1;
    }
    let env = RunEnv { agent: ctx.agent.clone(), started, finished: ctx.clock.now() };
    Ok(elaborate(job.clone(), results, &env)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_timestamp, Target};
    use std::collections::BTreeMap;

    fn page_url(name: &str) -> String {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/html");
        url::Url::from_file_path(dir.canonicalize().unwrap().join(name)).unwrap().to_string()
    }

    fn job(acts: Vec<Act>) -> Job {
        Job {
            id: "j1".into(),
            what: "test".into(),
            time_stamp: "2024-01-01T00:00:00Z".into(),
            target: Target { url: "https://example.org/".into(), what: "x".into() },
            acts,
            extras: BTreeMap::new(),
        }
    }

    fn fake() -> FakeClock {
        FakeClock::new(parse_timestamp("2024-01-01T00:00:00Z").unwrap(), Duration::from_secs(1))
    }

    #[test]
    fn native_run_on_fixture() {
        let clock = fake();
        let ctx = RunContext::new("tester", &clock);
        let registry = ToolRegistry::default_config();
        let j = job(vec![Act::navigate(&page_url("bad.html")), Act::test("native", "rules")]);
        let report = run_job(&j, &registry, &ctx).unwrap();
        report.check().unwrap();
        let tool = report.act_results[1].as_tool().unwrap();
        assert!(tool.error.is_none());
        assert!(tool.standard.instance_count() > 0);
        assert_eq!(report.job_data.elapsed_seconds, 1);
        assert_eq!(report.job_data.agent, "tester");
    }

    #[test]
    fn failed_navigation_prevents_later_tests() {
        let clock = fake();
        let ctx = RunContext::new("t", &clock);
        let registry = ToolRegistry::default_config();
        let j = job(vec![Act::navigate(&page_url("missing.html")), Act::test("native", ""), Act::test("axe", "")]);
        let report = run_job(&j, &registry, &ctx).unwrap();
        assert!(matches!(report.act_results[0], ActResult::Navigation { ok: false, .. }));
        assert!(report.tool_results().all(|t| t.standard.prevented));
        assert_eq!(report.job_data.error_count, 2);
    }

    #[test]
    fn builtin_without_page_is_prevented() {
        let clock = fake();
        let ctx = RunContext::new("t", &clock);
        let report = run_job(&job(vec![Act::test("native", "")]), &ToolRegistry::default_config(), &ctx).unwrap();
        assert_eq!(report.act_results[0].as_tool().unwrap().error.as_deref(), Some("no page loaded"));
    }

    #[test]
    fn wait_advances_fake_clock() {
        let clock = fake();
        let ctx = RunContext::new("t", &clock);
        let mut wait = Act::navigate("x");
        wait.act_type = ActType::Wait;
        wait.url = None;
        wait.options.insert("millis".into(), "5000".into());
        let report = run_job(&job(vec![wait, Act::test("native", "")]), &ToolRegistry::default_config(), &ctx).unwrap();
        assert_eq!(report.act_results[0], ActResult::Wait { millis: 5000 });
        assert_eq!(report.job_data.elapsed_seconds, 6);
    }

    #[test]
    fn external_batch_keeps_act_order() {
        let clock = fake();
        let mut ctx = RunContext::new("t", &clock);
        ctx.concurrency = 2;
        let registry = ToolRegistry::default_config();
        let tools = ["axe", "wave", "htmlcs", "nuVal", "ibm"];
        let mut acts = vec![Act::navigate(&page_url("bad.html"))];
        acts.extend(tools.iter().map(|t| Act::test(t, t)));
        let report = run_job(&job(acts), &registry, &ctx).unwrap();
        let codes: Vec<_> = report.tool_results().map(|t| t.tool_code.as_str()).collect();
        assert_eq!(codes, tools);
        for t in report.tool_results() {
            assert!(t.error.is_none(), "{}: {:?}", t.tool_code, t.error);
        }
    }

    #[test]
    fn unknown_tool_is_prevented() {
        let clock = fake();
        let ctx = RunContext::new("t", &clock);
        let report = run_job(&job(vec![Act::test("nope", "")]), &ToolRegistry::default_config(), &ctx).unwrap();
        assert!(report.act_results[0].as_tool().unwrap().standard.prevented);
    }
}
