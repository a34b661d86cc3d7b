//! Job language, standard results and the report envelope.
//!
//! Every other module consumes these types. Field names on the wire are
//! fixed (`type`, `which`, `what`, `rules`, `totals`, `instances`, `ruleID`,
//! ...) and struct field order is the serialization order, so two
//! serializations of the same value are byte-identical.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Longest excerpt kept on an [`Instance`], in characters, marker included.
pub const EXCERPT_LIMIT: usize = 400;
/// Appended to excerpts that were cut at [`EXCERPT_LIMIT`].
pub const TRUNCATION_MARKER: char = '…';

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActType {
    Launch,
    Navigate,
    Wait,
    Test,
}

impl ActType {
    pub const SUPPORTED: [&'static str; 4] = ["launch", "navigate", "wait", "test"];

    pub fn as_str(self) -> &'static str {
        match self {
            ActType::Launch => "launch",
            ActType::Navigate => "navigate",
            ActType::Wait => "wait",
            ActType::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Browser {
    Chromium,
    Webkit,
    Firefox,
}

impl Browser {
    pub fn as_str(self) -> &'static str {
        match self {
            Browser::Chromium => "chromium",
            Browser::Webkit => "webkit",
            Browser::Firefox => "firefox",
        }
    }
}

/// One instruction in a job.
///
/// `url` is only meaningful on navigate acts; a wait act reads its duration
/// from `options["millis"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Act {
    #[serde(rename = "type")]
    pub act_type: ActType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub which: Option<String>,
    #[serde(default)]
    pub what: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub browser: Option<Browser>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub options: BTreeMap<String, String>,
}

impl Act {
    pub fn test(which: &str, what: &str) -> Self {
        Act {
            act_type: ActType::Test,
            which: Some(which.to_string()),
            what: what.to_string(),
            url: None,
            rules: None,
            browser: None,
            options: BTreeMap::new(),
        }
    }

    pub fn navigate(url: &str) -> Self {
        Act {
            act_type: ActType::Navigate,
            which: None,
            what: format!("go to {url}"),
            url: Some(url.to_string()),
            rules: None,
            browser: None,
            options: BTreeMap::new(),
        }
    }

    pub fn with_rules<I, S>(mut self, rules: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rules = Some(rules.into_iter().map(Into::into).collect());
        self
    }

    pub fn is_test(&self) -> bool {
        self.act_type == ActType::Test
    }

    /// Tool code of a test act; empty for other act types.
    pub fn tool(&self) -> &str {
        self.which.as_deref().unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Target {
    #[serde(default)]
    pub url: String,
    #[serde(default)]
    pub what: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    #[serde(default)]
    pub what: String,
    #[serde(rename = "timeStamp", default)]
    pub time_stamp: String,
    #[serde(default)]
    pub target: Target,
    pub acts: Vec<Act>,
    /// Unrecognized top-level fields, carried through untouched.
    #[serde(flatten)]
    pub extras: BTreeMap<String, Value>,
}

impl Job {
    pub fn test_act_indexes(&self) -> Vec<usize> {
        self.acts
            .iter()
            .enumerate()
            .filter(|(_, act)| act.is_test())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Whether a job id is usable as a file stem: ASCII letters, digits, `_`,
/// `-` and `.`, not starting with `.`.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocKind {
    Dom,
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocationType {
    Xpath,
    Selector,
    Line,
    Box,
    None,
}

/// Where on the page an instance was found.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawLocation")]
pub struct Location {
    pub doc: DocKind,
    #[serde(rename = "type")]
    pub loc_type: LocationType,
    pub spec: String,
}

#[derive(Deserialize)]
struct RawLocation {
    doc: DocKind,
    #[serde(rename = "type")]
    loc_type: LocationType,
    #[serde(default)]
    spec: String,
}

impl TryFrom<RawLocation> for Location {
    type Error = ModelError;

    fn try_from(raw: RawLocation) -> Result<Self, Self::Error> {
        Location::new(raw.doc, raw.loc_type, raw.spec)
    }
}

impl Location {
    pub fn new(doc: DocKind, loc_type: LocationType, spec: impl Into<String>) -> Result<Self, ModelError> {
        let spec = spec.into();
        match loc_type {
            LocationType::None if !spec.is_empty() => {
                return Err(ModelError::Location("type none requires an empty spec".into()))
            }
            LocationType::None => {}
            _ if spec.is_empty() => {
                return Err(ModelError::Location(format!(
                    "type {loc_type:?} requires a non-empty spec"
                )))
            }
            LocationType::Line => match spec.parse::<u64>() {
                Ok(n) if n >= 1 => {}
                _ => {
                    return Err(ModelError::Location(format!(
                        "line location spec {spec:?} is not a positive integer"
                    )))
                }
            },
            _ => {}
        }
        Ok(Location { doc, loc_type, spec })
    }

    pub fn none() -> Self {
        Location { doc: DocKind::Dom, loc_type: LocationType::None, spec: String::new() }
    }

    pub fn xpath(path: impl Into<String>) -> Self {
        Location { doc: DocKind::Dom, loc_type: LocationType::Xpath, spec: path.into() }
    }

    pub fn selector(selector: impl Into<String>) -> Self {
        Location { doc: DocKind::Dom, loc_type: LocationType::Selector, spec: selector.into() }
    }

    /// Source line location; `None` for line 0.
    pub fn line(line: u64) -> Option<Self> {
        (line >= 1).then(|| Location {
            doc: DocKind::Source,
            loc_type: LocationType::Line,
            spec: line.to_string(),
        })
    }
}

/// Unified impact level, 0 (least) through 3 (most serious).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const MAX: u8 = 3;

    pub fn new(level: u8) -> Result<Self, ModelError> {
        if level <= Self::MAX {
            Ok(Severity(level))
        } else {
            Err(ModelError::Severity(level))
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TryFrom<u8> for Severity {
    type Error = ModelError;

    fn try_from(level: u8) -> Result<Self, Self::Error> {
        Severity::new(level)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One reported rule violation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instance {
    #[serde(rename = "ruleID")]
    pub rule_id: String,
    pub what: String,
    pub count: u32,
    #[serde(rename = "ordinalSeverity")]
    pub ordinal_severity: Severity,
    #[serde(rename = "tagName")]
    pub tag_name: String,
    pub id: String,
    pub location: Location,
    pub excerpt: String,
}

impl Instance {
    /// Builds an instance with count 1, truncating the excerpt.
    pub fn new(rule_id: impl Into<String>, what: impl Into<String>, severity: Severity) -> Self {
        Instance {
            rule_id: rule_id.into(),
            what: what.into(),
            count: 1,
            ordinal_severity: severity,
            tag_name: String::new(),
            id: String::new(),
            location: Location::none(),
            excerpt: String::new(),
        }
    }

    pub fn with_excerpt(mut self, excerpt: &str) -> Self {
        self.excerpt = truncate_excerpt(excerpt);
        self
    }
}

/// Caps an excerpt at [`EXCERPT_LIMIT`] characters, marking any cut.
pub fn truncate_excerpt(text: &str) -> String {
    if text.chars().count() <= EXCERPT_LIMIT {
        return text.to_string();
    }
    let mut out: String = text.chars().take(EXCERPT_LIMIT - 1).collect();
    out.push(TRUNCATION_MARKER);
    out
}

/// Normalized findings of one tool run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StandardResult {
    pub totals: [u64; 4],
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub prevented: bool,
    #[serde(default)]
    pub capped: bool,
}

impl StandardResult {
    /// Result with totals summed from the instance counts.
    pub fn from_instances(instances: Vec<Instance>) -> Self {
        let totals = Self::sum_counts(&instances);
        StandardResult { totals, instances, prevented: false, capped: false }
    }

    pub fn prevented() -> Self {
        StandardResult { prevented: true, ..Default::default() }
    }

    pub fn sum_counts(instances: &[Instance]) -> [u64; 4] {
        let mut totals = [0u64; 4];
        for inst in instances {
            totals[inst.ordinal_severity.index()] += u64::from(inst.count);
        }
        totals
    }

    /// Checks the totals law and instance invariants.
    pub fn check(&self) -> Result<(), ModelError> {
        if let Some(bad) = self.instances.iter().find(|i| i.count == 0) {
            return Err(ModelError::Totals(format!("instance {} has count 0", bad.rule_id)));
        }
        let sums = Self::sum_counts(&self.instances);
        for (s, (total, sum)) in self.totals.iter().zip(sums).enumerate() {
            let ok = if self.capped { *total >= sum } else { *total == sum };
            if !ok {
                return Err(ModelError::Totals(format!(
                    "severity {s}: totals {total} vs instance counts {sum} (capped={})",
                    self.capped
                )));
            }
        }
        Ok(())
    }

    pub fn instance_count(&self) -> u64 {
        self.totals.iter().sum()
    }
}

/// Outcome of one test act.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    #[serde(rename = "toolCode")]
    pub tool_code: String,
    pub native: Value,
    pub standard: StandardResult,
    #[serde(rename = "elapsedMillis")]
    pub elapsed_millis: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ToolResult {
    pub fn failed(tool_code: &str, error: impl Into<String>, elapsed_millis: u64) -> Self {
        ToolResult {
            tool_code: tool_code.to_string(),
            native: Value::Null,
            standard: StandardResult::prevented(),
            elapsed_millis,
            error: Some(error.into()),
        }
    }
}

/// Per-act outcome recorded in a report, tagged by `kind`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ActResult {
    Launch {
        browser: Browser,
    },
    Navigation {
        url: String,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        status: Option<u16>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Wait {
        millis: u64,
    },
    Tool(ToolResult),
}

impl ActResult {
    pub fn as_tool(&self) -> Option<&ToolResult> {
        match self {
            ActResult::Tool(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_tool_mut(&mut self) -> Option<&mut ToolResult> {
        match self {
            ActResult::Tool(t) => Some(t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobData {
    #[serde(rename = "startTime")]
    pub start_time: String,
    #[serde(rename = "endTime")]
    pub end_time: String,
    #[serde(rename = "elapsedSeconds")]
    pub elapsed_seconds: u64,
    pub agent: String,
    #[serde(rename = "errorCount")]
    pub error_count: u64,
}

/// A job elaborated with per-act results and whole-job data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    #[serde(flatten)]
    pub job: Job,
    #[serde(rename = "actResults")]
    pub act_results: Vec<ActResult>,
    #[serde(rename = "jobData")]
    pub job_data: JobData,
}

impl Report {
    pub fn tool_results(&self) -> impl Iterator<Item = &ToolResult> {
        self.act_results.iter().filter_map(ActResult::as_tool)
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.act_results.len() != self.job.acts.len() {
            return Err(ModelError::Report(format!(
                "{} act results for {} acts",
                self.act_results.len(),
                self.job.acts.len()
            )));
        }
        let start = parse_timestamp(&self.job_data.start_time)?;
        let end = parse_timestamp(&self.job_data.end_time)?;
        if end < start {
            return Err(ModelError::Report("endTime precedes startTime".into()));
        }
        for result in self.tool_results() {
            if result.error.is_some() && !result.standard.prevented {
                return Err(ModelError::Report(format!(
                    "{} has an error but is not marked prevented",
                    result.tool_code
                )));
            }
            result.standard.check()?;
        }
        Ok(())
    }
}

/// ISO-8601 UTC with seconds precision, e.g. `2023-08-18T12:00:00Z`.
pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_timestamp(text: &str) -> Result<DateTime<Utc>, ModelError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| ModelError::Timestamp(format!("{text:?}: {e}")))
}

/// Whole seconds between two instants, rounding half up.
pub fn elapsed_seconds(start: DateTime<Utc>, end: DateTime<Utc>) -> u64 {
    let millis = (end - start).num_milliseconds().max(0) as u64;
    (millis + 500) / 1000
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid location: {0}")]
    Location(String),
    #[error("ordinal severity {0} is outside 0-3")]
    Severity(u8),
    #[error("totals law violated: {0}")]
    Totals(String),
    #[error("invalid report: {0}")]
    Report(String),
    #[error("invalid timestamp {0}")]
    Timestamp(String),
}

/// One problem found while parsing a job document.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JobError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("job must be a JSON object")]
    NotAnObject,
    #[error("id must be non-empty and match [A-Za-z0-9_-]+")]
    BadId,
    #[error("acts must be present")]
    MissingActs,
    #[error("acts must be non-empty")]
    EmptyActs,
    #[error("act {index}: {message}")]
    Act { index: usize, message: String },
    #[error("schema: {0}")]
    Schema(String),
}

/// Parses and validates a job document, reporting every problem found.
pub fn parse_job(text: &str) -> Result<Job, Vec<JobError>> {
    let value: Value = serde_json::from_str(text).map_err(|e| vec![JobError::Json(e.to_string())])?;
    job_from_value(value)
}

pub fn job_from_value(value: Value) -> Result<Job, Vec<JobError>> {
    let obj = value.as_object().ok_or_else(|| vec![JobError::NotAnObject])?;
    let mut errors = Vec::new();

    match obj.get("id").and_then(Value::as_str) {
        Some(id) if is_safe_id(id) => {}
        _ => errors.push(JobError::BadId),
    }
    match obj.get("acts") {
        None => errors.push(JobError::MissingActs),
        Some(Value::Array(acts)) if acts.is_empty() => errors.push(JobError::EmptyActs),
        Some(Value::Array(acts)) => {
            for (index, act) in acts.iter().enumerate() {
                check_raw_act(index, act, &mut errors);
            }
        }
        Some(_) => errors.push(JobError::Schema("acts must be an array".into())),
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    serde_json::from_value(value).map_err(|e| vec![JobError::Schema(e.to_string())])
}

fn check_raw_act(index: usize, act: &Value, errors: &mut Vec<JobError>) {
    let mut fail = |message: String| errors.push(JobError::Act { index, message });
    let Some(obj) = act.as_object() else {
        fail("act must be an object".into());
        return;
    };
    match obj.get("type").and_then(Value::as_str) {
        None => fail("missing type".into()),
        Some(t) if !ActType::SUPPORTED.contains(&t) => fail(format!("unsupported act type {t:?}")),
        Some("test") => {
            let which = obj.get("which").and_then(Value::as_str).unwrap_or("");
            if which.is_empty() {
                fail("test act requires a non-empty `which`".into());
            }
        }
        Some(_) => {}
    }
    match obj.get("rules") {
        None | Some(Value::Null) => {}
        Some(Value::Array(rules)) => {
            if rules.is_empty() {
                fail("rules, if present, must be non-empty".into());
            }
            let mut seen = HashSet::new();
            for rule in rules {
                match rule.as_str() {
                    Some(r) if !seen.insert(r) => fail(format!("duplicate rule ID {r:?}")),
                    Some(_) => {}
                    None => fail("rule IDs must be strings".into()),
                }
            }
        }
        Some(_) => fail("rules must be an array of strings".into()),
    }
}

/// Deterministic pretty-printed JSON for a report.
pub fn serialize_report(report: &Report) -> String {
    serde_json::to_string_pretty(report).expect("report values are always serializable")
}

pub fn serialize_job(job: &Job) -> String {
    serde_json::to_string_pretty(job).expect("job values are always serializable")
}

pub fn parse_report(text: &str) -> Result<Report, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALFA_JOB: &str = r#"{
        "id": "demo",
        "what": "alfa demo",
        "timeStamp": "2023-08-18T12:00:00Z",
        "target": {"url": "https://www.w3.org/", "what": "World Wide Web Consortium"},
        "acts": [
            {"type": "test", "which": "alfa", "what": "Siteimprove alfa tool", "rules": ["r25", "r71"]}
        ]
    }"#;

    #[test]
    fn parses_alfa_act() {
        let job = parse_job(ALFA_JOB).unwrap();
        assert_eq!(job.acts.len(), 1);
        let act = &job.acts[0];
        assert_eq!(act.act_type, ActType::Test);
        assert_eq!(act.tool(), "alfa");
        assert_eq!(act.what, "Siteimprove alfa tool");
        assert_eq!(act.rules.as_deref(), Some(&["r25".to_string(), "r71".to_string()][..]));
    }

    #[test]
    fn empty_acts_rejected() {
        let errs = parse_job(r#"{"id":"j","acts":[]}"#).unwrap_err();
        assert_eq!(errs, vec![JobError::EmptyActs]);
        assert_eq!(errs[0].to_string(), "acts must be non-empty");
    }

    #[test]
    fn missing_which_names_act_index() {
        let errs = parse_job(r#"{"id":"j","acts":[{"type":"navigate","url":"http://x/"},{"type":"test"}]}"#)
            .unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(matches!(errs[0], JobError::Act { index: 1, .. }), "{errs:?}");
        assert!(errs[0].to_string().starts_with("act 1:"));
    }

    #[test]
    fn collects_every_error() {
        let errs = parse_job(
            r#"{"id":"bad id","acts":[{"type":"click"},{"type":"test","which":"axe","rules":["a","a"]},{"type":"test","which":"axe","rules":[]}]}"#,
        )
        .unwrap_err();
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| e.to_string().contains("unsupported act type")));
        assert!(errs.iter().any(|e| e.to_string().contains("duplicate rule ID")));
    }

    #[test]
    fn malformed_json_and_missing_acts() {
        assert!(matches!(parse_job("{").unwrap_err()[0], JobError::Json(_)));
        assert_eq!(parse_job(r#"{"id":"x"}"#).unwrap_err(), vec![JobError::MissingActs]);
    }

    #[test]
    fn extras_are_preserved() {
        let text = r#"{"id":"j","acts":[{"type":"wait"}],"version":"18.0.0","sources":{"script":"s"}}"#;
        let job = parse_job(text).unwrap();
        assert_eq!(job.extras["version"], Value::from("18.0.0"));
        let again = parse_job(&serialize_job(&job)).unwrap();
        assert_eq!(again, job);
    }

    #[test]
    fn location_invariants() {
        assert!(Location::new(DocKind::Source, LocationType::Line, "12").is_ok());
        assert!(Location::new(DocKind::Source, LocationType::Line, "0").is_err());
        assert!(Location::new(DocKind::Source, LocationType::Line, "x").is_err());
        assert!(Location::new(DocKind::Dom, LocationType::None, "a").is_err());
        assert!(Location::new(DocKind::Dom, LocationType::Xpath, "").is_err());
        let bad: Result<Location, _> = serde_json::from_str(r#"{"doc":"dom","type":"line","spec":"-3"}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn safe_ids() {
        for id in ["scriptA-w3c", "job_1", "bad-all.p2"] {
            assert!(is_safe_id(id), "{id}");
        }
        for id in ["", ".hidden", "..", "a/b", "a b", "../x", "é"] {
            assert!(!is_safe_id(id), "{id}");
        }
    }

    #[test]
    fn severity_bounds() {
        assert!(Severity::new(3).is_ok());
        assert!(Severity::new(4).is_err());
        assert!(serde_json::from_str::<Severity>("7").is_err());
    }

    #[test]
    fn excerpt_truncation() {
        let long = "x".repeat(1000);
        let cut = truncate_excerpt(&long);
        assert_eq!(cut.chars().count(), EXCERPT_LIMIT);
        assert!(cut.ends_with(TRUNCATION_MARKER));
        assert_eq!(truncate_excerpt("<img>"), "<img>");
        let exact = "é".repeat(EXCERPT_LIMIT);
        assert_eq!(truncate_excerpt(&exact), exact);
    }

    #[test]
    fn totals_law() {
        let sev = |n| Severity::new(n).unwrap();
        let mut a = Instance::new("r", "w", sev(3));
        a.count = 2;
        let b = Instance::new("s", "w", sev(0));
        let mut result = StandardResult::from_instances(vec![a, b]);
        assert_eq!(result.totals, [1, 0, 0, 2]);
        assert!(result.check().is_ok());
        result.totals[1] = 5;
        assert!(result.check().is_err());
        result.capped = true;
        assert!(result.check().is_ok());
        result.totals[3] = 1;
        assert!(result.check().is_err());
    }

    #[test]
    fn empty_totals_serialize_as_zeroes() {
        let text = serde_json::to_string(&StandardResult::default()).unwrap();
        assert!(text.contains(r#""totals":[0,0,0,0]"#), "{text}");
    }

    #[test]
    fn elapsed_rounds_half_up() {
        let t0 = parse_timestamp("2024-01-01T00:00:00Z").unwrap();
        let ms = |n| t0 + chrono::Duration::milliseconds(n);
        assert_eq!(elapsed_seconds(t0, ms(1499)), 1);
        assert_eq!(elapsed_seconds(t0, ms(1500)), 2);
        assert_eq!(elapsed_seconds(t0, ms(0)), 0);
        assert_eq!(format_timestamp(ms(1500)), "2024-01-01T00:00:01Z");
    }
}
