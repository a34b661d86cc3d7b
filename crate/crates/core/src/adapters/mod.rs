//! External tool registry, invocation and normalization.
//!
//! A registry is loaded from a `tools.json` document:
//!
//! ```json
//! {"tools": [
//!   {"code": "axe", "kind": "subprocess",
//!    "commandTemplate": "sh {dir}/emitters/emit.sh axe {url}",
//!    "parser": "axe", "timeoutSeconds": 30,
//!    "severityMap": {"minor": 0, "moderate": 1, "serious": 2, "critical": 3}}
//! ]}
//! ```
//!
//! `{url}` is replaced by the page under test and `{dir}` by the directory
//! holding the config file.

mod invoke;
mod shapes;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::model::{Job, Severity};
use crate::rules::RuleRegistry;

pub use invoke::{invoke_tool, InvokeError, NativeReport};
pub use shapes::{normalize_payload, Normalized};

/// Tool code of the built-in rule engine.
pub const NATIVE_TOOL: &str = "native";

const DEFAULT_CONFIG: &str = include_str!("../../../../fixtures/tools.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Builtin,
    Subprocess,
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Native,
    Axe,
    Htmlcs,
    Nu,
    Wave,
    Ibm,
    Qualweb,
    Alfa,
}

impl Shape {
    /// Shapes of the `{results:[{ruleID, verdict, level, path, snippet}]}`
    /// family.
    pub fn is_results_family(self) -> bool {
        matches!(self, Shape::Ibm | Shape::Qualweb | Shape::Alfa)
    }
}

/// Which field of a results-family entry selects its severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeverityKey {
    #[default]
    Verdict,
    Level,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub code: String,
    pub kind: ToolKind,
    #[serde(rename = "commandTemplate", default, skip_serializing_if = "Option::is_none")]
    pub command_template: Option<String>,
    #[serde(rename = "endpointTemplate", default, skip_serializing_if = "Option::is_none")]
    pub endpoint_template: Option<String>,
    pub parser: Shape,
    #[serde(rename = "severityMap", default)]
    pub severity_map: BTreeMap<String, Severity>,
    #[serde(rename = "timeoutSeconds", default = "default_timeout")]
    pub timeout_seconds: u64,
    /// Flag used to forward an act's rule list; absent when unsupported.
    #[serde(rename = "rulesParam", default, skip_serializing_if = "Option::is_none")]
    pub rules_param: Option<String>,
    /// Known rule IDs, used to warn about unknown rules in jobs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<String>,
    /// Results-family verdicts that denote a reportable finding.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub verdicts: Vec<String>,
    #[serde(rename = "severityKey", default)]
    pub severity_key: SeverityKey,
    /// Directory substituted for `{dir}`; set at load time.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_timeout() -> u64 {
    60
}

/// Severity lookup outcome; unmapped levels fall back to 1 with a warning.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeverityLookup {
    pub severity: Severity,
    pub warning: Option<String>,
}

impl ToolSpec {
    pub const FALLBACK_SEVERITY: u8 = 1;

    pub fn severity_of(&self, native_level: &str) -> SeverityLookup {
        match self.severity_map.get(native_level) {
            Some(&severity) => SeverityLookup { severity, warning: None },
            None => SeverityLookup {
                severity: Severity::new(Self::FALLBACK_SEVERITY).expect("fallback is in range"),
                warning: Some(format!(
                    "{}: unmapped severity level {native_level:?}, using {}",
                    self.code,
                    Self::FALLBACK_SEVERITY
                )),
            },
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.code.is_empty() {
            return Err("code must be non-empty".into());
        }
        if self.timeout_seconds == 0 {
            return Err("timeoutSeconds must be positive".into());
        }
        match self.kind {
            ToolKind::Builtin if self.parser != Shape::Native => {
                return Err("builtin tools use the native parser".into())
            }
            ToolKind::Subprocess => match &self.command_template {
                Some(t) if t.contains("{url}") => {}
                _ => return Err("subprocess tools need a commandTemplate containing {url}".into()),
            },
            ToolKind::Remote if self.endpoint_template.as_deref().unwrap_or("").is_empty() => {
                return Err("remote tools need an endpointTemplate".into())
            }
            _ => {}
        }
        if self.kind != ToolKind::Builtin && self.parser == Shape::Native {
            return Err("the native parser is reserved for the builtin tool".into());
        }
        if self.parser.is_results_family() && self.verdicts.is_empty() {
            return Err("results-family parsers need a verdicts list".into());
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read tool config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed tool config: {0}")]
    Json(String),
    #[error("duplicate tool code {0}")]
    Duplicate(String),
    #[error("tool {code}: {message}")]
    Malformed { code: String, message: String },
    #[error("unknown tool {0}")]
    UnknownTool(String),
}

#[derive(Deserialize)]
struct RegistryFile {
    tools: Vec<Value>,
}

/// Tools by code, plus the rule registry backing the builtin tool.
#[derive(Debug, Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolSpec>,
    native_rules: RuleRegistry,
}

impl ToolRegistry {
    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| RegistryError::Io { path: path.to_path_buf(), source })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &dir)
    }

    /// The shipped configuration: the eight Table-1 tool codes, with
    /// external tools backed by the fixture emitters.
    pub fn default_config() -> Self {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
        let dir = dir.canonicalize().unwrap_or(dir);
        Self::from_json(DEFAULT_CONFIG, &dir).expect("shipped tool config is valid")
    }

    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, RegistryError> {
        let file: RegistryFile = serde_json::from_str(text).map_err(|e| RegistryError::Json(e.to_string()))?;
        let mut tools = BTreeMap::new();
        for raw in file.tools {
            let code = raw.get("code").and_then(Value::as_str).unwrap_or("").to_string();
            let mut spec: ToolSpec = serde_json::from_value(raw)
                .map_err(|e| RegistryError::Malformed { code: code.clone(), message: e.to_string() })?;
            spec.check().map_err(|message| RegistryError::Malformed { code: code.clone(), message })?;
            spec.base_dir = base_dir.to_path_buf();
            if tools.contains_key(&spec.code) {
                return Err(RegistryError::Duplicate(spec.code));
            }
            tools.insert(spec.code.clone(), spec);
        }
        Ok(ToolRegistry { tools, native_rules: RuleRegistry::starter() })
    }

    pub fn with_native_rules(mut self, rules: RuleRegistry) -> Self {
        self.native_rules = rules;
        self
    }

    pub fn native_rules(&self) -> &RuleRegistry {
        &self.native_rules
    }

    pub fn get(&self, code: &str) -> Option<&ToolSpec> {
        self.tools.get(code)
    }

    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.tools.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tools.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    pub fn insert(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        spec.check()
            .map_err(|message| RegistryError::Malformed { code: spec.code.clone(), message })?;
        if self.tools.contains_key(&spec.code) {
            return Err(RegistryError::Duplicate(spec.code));
        }
        self.tools.insert(spec.code.clone(), spec);
        Ok(())
    }

    pub fn severity_of(&self, code: &str, native_level: &str) -> Result<SeverityLookup, RegistryError> {
        self.get(code)
            .map(|spec| spec.severity_of(native_level))
            .ok_or_else(|| RegistryError::UnknownTool(code.to_string()))
    }

    /// Normalizes a native report with the parser its tool declares.
    pub fn normalize(&self, native: &NativeReport) -> Result<Normalized, RegistryError> {
        let spec = self
            .get(&native.tool_code)
            .ok_or_else(|| RegistryError::UnknownTool(native.tool_code.clone()))?;
        Ok(normalize_payload(spec, &native.payload))
    }

    /// Known rule IDs for a tool, if the registry knows them.
    fn known_rules<'a>(&'a self, spec: &'a ToolSpec) -> Option<HashSet<&'a str>> {
        if spec.kind == ToolKind::Builtin {
            Some(self.native_rules.rule_ids().collect())
        } else if spec.rules.is_empty() {
            None
        } else {
            Some(spec.rules.iter().map(String::as_str).collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ViolationLevel {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub act: usize,
    pub level: ViolationLevel,
    pub message: String,
}

/// Checks a job's test acts against the registry. Unknown tools are
/// errors; unknown rule IDs are warnings.
pub fn validate_job(job: &Job, registry: &ToolRegistry) -> Vec<Violation> {
    let mut out = Vec::new();
    for (act, a) in job.acts.iter().enumerate() {
        if !a.is_test() {
            continue;
        }
        let Some(spec) = registry.get(a.tool()) else {
            out.push(Violation { act, level: ViolationLevel::Error, message: format!("unknown tool {}", a.tool()) });
            continue;
        };
        if let (Some(rules), Some(known)) = (&a.rules, registry.known_rules(spec)) {
            for rule in rules.iter().filter(|r| !known.contains(r.as_str())) {
                out.push(Violation { act, level: ViolationLevel::Warning, message: format!("unknown rule {rule}") });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_job, Act, Job};

    fn job_with(acts: Vec<Act>) -> Job {
        let mut job = parse_job(r#"{"id":"j","acts":[{"type":"wait"}]}"#).unwrap();
        job.acts = acts;
        job
    }

    #[test]
    fn default_config_has_eight_tools() {
        let reg = ToolRegistry::default_config();
        let codes: Vec<_> = reg.codes().collect();
        assert_eq!(codes, ["alfa", "axe", "htmlcs", "ibm", "native", "nuVal", "qualWeb", "wave"]);
        assert_eq!(reg.get("native").unwrap().kind, ToolKind::Builtin);
        assert!(reg.codes().filter(|c| *c != NATIVE_TOOL).all(|c| reg.get(c).unwrap().kind != ToolKind::Builtin));
    }

    #[test]
    fn duplicate_codes_rejected() {
        let text = r#"{"tools":[
            {"code":"axe","kind":"subprocess","commandTemplate":"x {url}","parser":"axe"},
            {"code":"axe","kind":"subprocess","commandTemplate":"y {url}","parser":"axe"}]}"#;
        assert!(matches!(ToolRegistry::from_json(text, Path::new(".")), Err(RegistryError::Duplicate(c)) if c == "axe"));
    }

    #[test]
    fn malformed_specs_rejected() {
        let bad = [
            r#"{"code":"a","kind":"subprocess","commandTemplate":"no placeholder","parser":"axe"}"#,
            r#"{"code":"a","kind":"remote","parser":"axe"}"#,
            r#"{"code":"a","kind":"subprocess","commandTemplate":"x {url}","parser":"axe","severityMap":{"minor":4}}"#,
            r#"{"code":"a","kind":"subprocess","commandTemplate":"x {url}","parser":"alfa"}"#,
            r#"{"code":"a","kind":"builtin","parser":"axe"}"#,
            r#"{"code":"a","kind":"teleport","parser":"axe"}"#,
        ];
        for spec in bad {
            let text = format!(r#"{{"tools":[{spec}]}}"#);
            let err = ToolRegistry::from_json(&text, Path::new(".")).unwrap_err();
            assert!(matches!(err, RegistryError::Malformed { .. }), "{spec}: {err}");
        }
        assert!(matches!(ToolRegistry::from_json("[", Path::new(".")), Err(RegistryError::Json(_))));
    }

    #[test]
    fn custom_ninth_tool() {
        let mut reg = ToolRegistry::default_config();
        let spec: ToolSpec = serde_json::from_str(
            r#"{"code":"brandCheck","kind":"remote","endpointTemplate":"http://127.0.0.1:9/check","parser":"wave",
                "severityMap":{"error":3,"alert":1,"contrast":2}}"#,
        )
        .unwrap();
        reg.insert(spec).unwrap();
        assert_eq!(reg.len(), 9);
    }

    #[test]
    fn severity_lookup_and_fallback() {
        let reg = ToolRegistry::default_config();
        assert_eq!(reg.severity_of("axe", "critical").unwrap().severity.value(), 3);
        assert_eq!(reg.severity_of("nuVal", "info").unwrap().severity.value(), 0);
        let weird = reg.severity_of("axe", "weird").unwrap();
        assert_eq!(weird.severity.value(), 1);
        assert!(weird.warning.unwrap().contains("weird"));
        assert!(reg.severity_of("nosuch", "x").is_err());
    }

    #[test]
    fn default_severity_tables() {
        let reg = ToolRegistry::default_config();
        let expect: [(&str, &[(&str, u8)]); 7] = [
            ("axe", &[("minor", 0), ("moderate", 1), ("serious", 2), ("critical", 3)]),
            ("htmlcs", &[("3", 0), ("2", 1), ("1", 2)]),
            ("nuVal", &[("info", 0), ("error", 2)]),
            ("wave", &[("alert", 1), ("contrast", 2), ("error", 3)]),
            ("ibm", &[("recommendation", 1), ("violation", 3)]),
            ("qualWeb", &[("warning", 1), ("failed", 2)]),
            ("alfa", &[("cantTell", 1), ("failed", 2)]),
        ];
        for (tool, table) in expect {
            let mut last = 0;
            for &(level, sev) in table {
                let got = reg.severity_of(tool, level).unwrap();
                assert_eq!(got, SeverityLookup { severity: Severity::new(sev).unwrap(), warning: None }, "{tool} {level}");
                assert!(sev >= last, "{tool} ordering");
                last = sev;
            }
        }
    }

    #[test]
    fn validate_job_cases() {
        let reg = ToolRegistry::default_config();
        assert!(validate_job(&job_with(vec![Act::test("alfa", "")]), &reg).is_empty());

        let v = validate_job(&job_with(vec![Act::test("nosuchtool", "")]), &reg);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].level, ViolationLevel::Error);
        assert_eq!(v[0].message, "unknown tool nosuchtool");

        let v = validate_job(&job_with(vec![Act::test("native", "").with_rules(["zzz", "imageNoAlt"])]), &reg);
        assert_eq!(v, vec![Violation { act: 0, level: ViolationLevel::Warning, message: "unknown rule zzz".into() }]);
    }
}
