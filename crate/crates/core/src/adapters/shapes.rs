//! Parsers turning each tool's native report shape into a
//! [`StandardResult`]. The shapes are deliberately small subsets of the
//! real tools' output.

use serde::Deserialize;
use serde_json::Value;

use super::{Shape, SeverityKey, ToolSpec};
use crate::dom::parse_start_tag;
use crate::model::{Instance, Location, StandardResult};

/// Result of normalizing one payload. A payload that does not match its
/// declared shape yields a prevented result and an `error` diagnostic.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub standard: StandardResult,
    pub warnings: Vec<String>,
    pub error: Option<String>,
}

pub fn normalize_payload(spec: &ToolSpec, payload: &Value) -> Normalized {
    let mut warnings = Vec::new();
    let parsed = match spec.parser {
        Shape::Native => serde_json::from_value::<StandardResult>(payload.clone())
            .map_err(|e| e.to_string())
            .map(|r| r.instances),
        Shape::Axe => parse_axe(spec, payload, &mut warnings),
        Shape::Htmlcs => parse_htmlcs(spec, payload, &mut warnings),
        Shape::Nu => parse_nu(spec, payload, &mut warnings),
        Shape::Wave => parse_wave(spec, payload, &mut warnings),
        Shape::Ibm | Shape::Qualweb | Shape::Alfa => parse_results(spec, payload, &mut warnings),
    };
    match parsed {
        Ok(instances) => Normalized {
            standard: StandardResult::from_instances(instances),
            warnings,
            error: None,
        },
        Err(message) => Normalized {
            standard: StandardResult::prevented(),
            warnings,
            error: Some(format!("payload does not match {:?} shape: {message}", spec.parser)),
        },
    }
}

fn severity(spec: &ToolSpec, level: &str, warnings: &mut Vec<String>) -> crate::model::Severity {
    let lookup = spec.severity_of(level);
    if let Some(w) = lookup.warning {
        if !warnings.contains(&w) {
            warnings.push(w);
        }
    }
    lookup.severity
}

/// Fills tagName and id from an HTML excerpt that begins with a start tag.
fn identify(instance: &mut Instance, excerpt: &str) {
    if let Some((tag, attrs)) = parse_start_tag(excerpt.trim_start()) {
        instance.tag_name = tag;
        if let Some((_, id)) = attrs.into_iter().find(|(k, _)| k == "id") {
            instance.id = id;
        }
    }
}

fn decode<T: for<'de> Deserialize<'de>>(payload: &Value) -> Result<T, String> {
    T::deserialize(payload).map_err(|e| e.to_string())
}

#[derive(Deserialize)]
struct AxePayload {
    violations: Vec<AxeViolation>,
}

#[derive(Deserialize)]
struct AxeViolation {
    id: String,
    #[serde(default)]
    impact: Option<String>,
    #[serde(default)]
    description: String,
    nodes: Vec<AxeNode>,
}

#[derive(Deserialize)]
struct AxeNode {
    #[serde(default)]
    target: Vec<Value>,
    #[serde(default)]
    html: String,
}

fn parse_axe(spec: &ToolSpec, payload: &Value, warnings: &mut Vec<String>) -> Result<Vec<Instance>, String> {
    let report: AxePayload = decode(payload)?;
    let mut out = Vec::new();
    for violation in report.violations {
        let sev = severity(spec, violation.impact.as_deref().unwrap_or(""), warnings);
        for node in violation.nodes {
            let mut inst = Instance::new(&violation.id, &violation.description, sev).with_excerpt(&node.html);
            identify(&mut inst, &node.html);
            let selector: Vec<&str> = node.target.iter().filter_map(Value::as_str).collect();
            if !selector.is_empty() {
                inst.location = Location::selector(selector.join(" "));
            }
            out.push(inst);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Level {
    Number(u64),
    Text(String),
}

impl Level {
    fn key(&self) -> String {
        match self {
            Level::Number(n) => n.to_string(),
            Level::Text(s) => s.clone(),
        }
    }
}

#[derive(Deserialize)]
struct HtmlcsPayload {
    messages: Vec<HtmlcsMessage>,
}

#[derive(Deserialize)]
struct HtmlcsMessage {
    #[serde(rename = "type")]
    level: Level,
    code: String,
    #[serde(default)]
    msg: String,
    #[serde(default)]
    element: String,
    #[serde(default)]
    excerpt: String,
}

fn parse_htmlcs(spec: &ToolSpec, payload: &Value, warnings: &mut Vec<String>) -> Result<Vec<Instance>, String> {
    let report: HtmlcsPayload = decode(payload)?;
    Ok(report
        .messages
        .into_iter()
        .map(|m| {
            let sev = severity(spec, &m.level.key(), warnings);
            let mut inst = Instance::new(&m.code, &m.msg, sev).with_excerpt(&m.excerpt);
            identify(&mut inst, &m.excerpt);
            if !m.element.is_empty() {
                inst.tag_name = m.element.to_ascii_uppercase();
            }
            inst
        })
        .collect())
}

#[derive(Deserialize)]
struct NuPayload {
    messages: Vec<NuMessage>,
}

#[derive(Deserialize)]
struct NuMessage {
    #[serde(rename = "type")]
    level: String,
    #[serde(rename = "subType", default)]
    #[allow(dead_code)]
    sub_type: Option<String>,
    message: String,
    #[serde(rename = "lastLine", default)]
    last_line: Option<u64>,
    #[serde(default)]
    extract: String,
}

/// The message text doubles as the rule ID; the checker has no rule names.
fn parse_nu(spec: &ToolSpec, payload: &Value, warnings: &mut Vec<String>) -> Result<Vec<Instance>, String> {
    let report: NuPayload = decode(payload)?;
    Ok(report
        .messages
        .into_iter()
        .map(|m| {
            let sev = severity(spec, &m.level, warnings);
            let mut inst = Instance::new(&m.message, &m.message, sev).with_excerpt(&m.extract);
            identify(&mut inst, &m.extract);
            if let Some(loc) = m.last_line.and_then(Location::line) {
                inst.location = loc;
            }
            inst
        })
        .collect())
}

/// Categories that denote problems, in output order.
const WAVE_CATEGORIES: [&str; 3] = ["error", "contrast", "alert"];

#[derive(Deserialize)]
struct WavePayload {
    categories: serde_json::Map<String, Value>,
}

#[derive(Deserialize)]
struct WaveCategory {
    #[serde(default)]
    items: std::collections::BTreeMap<String, WaveItem>,
}

#[derive(Deserialize)]
struct WaveItem {
    count: u32,
    #[serde(default)]
    description: String,
}

/// One count-only instance per item; items with count 0 are dropped.
fn parse_wave(spec: &ToolSpec, payload: &Value, warnings: &mut Vec<String>) -> Result<Vec<Instance>, String> {
    let report: WavePayload = decode(payload)?;
    let mut out = Vec::new();
    for category in WAVE_CATEGORIES {
        let Some(raw) = report.categories.get(category) else { continue };
        let parsed: WaveCategory = decode(raw).map_err(|e| format!("category {category}: {e}"))?;
        let sev = severity(spec, category, warnings);
        for (rule_id, item) in parsed.items.into_iter().filter(|(_, item)| item.count > 0) {
            let mut inst = Instance::new(rule_id, item.description, sev);
            inst.count = item.count;
            out.push(inst);
        }
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ResultsPayload {
    results: Vec<ResultEntry>,
}

#[derive(Deserialize)]
struct ResultEntry {
    #[serde(rename = "ruleID")]
    rule_id: String,
    verdict: String,
    #[serde(default)]
    level: String,
    #[serde(default)]
    what: String,
    #[serde(default)]
    path: Option<String>,
    #[serde(default)]
    snippet: String,
}

fn parse_results(spec: &ToolSpec, payload: &Value, warnings: &mut Vec<String>) -> Result<Vec<Instance>, String> {
    let report: ResultsPayload = decode(payload)?;
    let path_is_xpath = matches!(spec.parser, Shape::Ibm | Shape::Alfa);
    Ok(report
        .results
        .into_iter()
        .filter(|r| spec.verdicts.contains(&r.verdict))
        .map(|r| {
            let key = match spec.severity_key {
                SeverityKey::Verdict => &r.verdict,
                SeverityKey::Level => &r.level,
            };
            let sev = severity(spec, key, warnings);
            let what = if r.what.is_empty() { format!("{} {}", r.rule_id, r.verdict) } else { r.what.clone() };
            let mut inst = Instance::new(&r.rule_id, what, sev).with_excerpt(&r.snippet);
            identify(&mut inst, &r.snippet);
            if let Some(path) = r.path.filter(|p| !p.is_empty()) {
                inst.location = if path_is_xpath { Location::xpath(path) } else { Location::selector(path) };
            }
            inst
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::ToolRegistry;
    use crate::model::LocationType;
    use serde_json::json;

    fn normalize(tool: &str, payload: Value) -> Normalized {
        let reg = ToolRegistry::default_config();
        normalize_payload(reg.get(tool).unwrap(), &payload)
    }

    #[test]
    fn axe_critical_spanning_two_nodes() {
        let n = normalize(
            "axe",
            json!({"violations": [{"id": "image-alt", "impact": "critical", "description": "Images must have alternate text",
                "nodes": [{"target": ["#a"], "html": "<img id=\"a\" src=\"a.png\">"}, {"target": ["img.b"], "html": "<img src=\"b.png\">"}]}]}),
        );
        assert_eq!(n.error, None);
        assert_eq!(n.standard.totals, [0, 0, 0, 2]);
        assert_eq!(n.standard.instances.len(), 2);
        let first = &n.standard.instances[0];
        assert_eq!(first.ordinal_severity.value(), 3);
        assert_eq!(first.tag_name, "IMG");
        assert_eq!(first.id, "a");
        assert_eq!(first.location.loc_type, LocationType::Selector);
        assert_eq!(first.location.spec, "#a");
    }

    #[test]
    fn axe_empty_violations() {
        let n = normalize("axe", json!({"violations": []}));
        assert_eq!(n.standard.totals, [0, 0, 0, 0]);
        assert!(n.standard.instances.is_empty());
        assert!(!n.standard.prevented);
    }

    #[test]
    fn axe_unmapped_impact_warns() {
        let n = normalize("axe", json!({"violations": [{"id": "x", "impact": "weird", "nodes": [{"html": ""}]}]}));
        assert_eq!(n.standard.totals, [0, 1, 0, 0]);
        assert_eq!(n.warnings.len(), 1);
        assert_eq!(n.standard.instances[0].location, Location::none());
    }

    #[test]
    fn wave_count_only_instance() {
        let n = normalize(
            "wave",
            json!({"categories": {"error": {"items": {"link_internal_broken": {"count": 2, "description": "Broken same-page link"}}},
                   "feature": {"items": {"alt_link": {"count": 4}}}}}),
        );
        assert_eq!(n.standard.instances.len(), 1);
        let inst = &n.standard.instances[0];
        assert_eq!(inst.rule_id, "link_internal_broken");
        assert_eq!(inst.count, 2);
        assert_eq!(inst.ordinal_severity.value(), 3);
        assert_eq!(inst.location.loc_type, LocationType::None);
        assert_eq!(inst.tag_name, "");
        assert_eq!(n.standard.totals, [0, 0, 0, 2]);
    }

    #[test]
    fn htmlcs_messages() {
        let n = normalize(
            "htmlcs",
            json!({"messages": [
                {"type": 1, "code": "AAA.2_4_1.G1,G123,G124.NoSuchID", "msg": "No element has id", "element": "a", "excerpt": "<a href=\"#gone\">x</a>"},
                {"type": "3", "code": "AAA.1_3_1.H48", "msg": "list?", "element": "p", "excerpt": ""}]}),
        );
        assert_eq!(n.standard.totals, [1, 0, 1, 0]);
        assert_eq!(n.standard.instances[0].tag_name, "A");
        assert_eq!(n.standard.instances[0].location.loc_type, LocationType::None);
    }

    #[test]
    fn nu_lines() {
        let n = normalize(
            "nuVal",
            json!({"messages": [
                {"type": "error", "message": "Duplicate ID “x”.", "lastLine": 12, "extract": "<p id=\"x\">"},
                {"type": "info", "subType": "warning", "message": "Consider lang", "lastLine": 0, "extract": "..."}]}),
        );
        assert_eq!(n.standard.totals, [1, 0, 1, 0]);
        let loc = &n.standard.instances[0].location;
        assert_eq!((loc.loc_type, loc.spec.as_str()), (LocationType::Line, "12"));
        assert_eq!(n.standard.instances[1].location.loc_type, LocationType::None);
    }

    #[test]
    fn results_family_filters_verdicts() {
        let payload = json!({"results": [
            {"ruleID": "r2", "verdict": "failed", "level": "A", "path": "/html/body/img[1]", "snippet": "<img src=x>"},
            {"ruleID": "r4", "verdict": "passed", "level": "A"},
            {"ruleID": "r11", "verdict": "cantTell", "level": "A"}]});
        let n = normalize("alfa", payload);
        assert_eq!(n.standard.totals, [0, 1, 1, 0]);
        assert_eq!(n.standard.instances[0].location, Location::xpath("/html/body/img[1]"));

        let ibm = normalize("ibm", json!({"results": [{"ruleID": "img_alt_valid", "verdict": "fail", "level": "violation"}]}));
        assert_eq!(ibm.standard.totals, [0, 0, 0, 1]);

        let qw = normalize("qualWeb", json!({"results": [{"ruleID": "QW-ACT-R17", "verdict": "warning", "path": "img"}]}));
        assert_eq!(qw.standard.instances[0].location.loc_type, LocationType::Selector);
    }

    #[test]
    fn nonconforming_payloads_are_prevented() {
        for (tool, payload) in [
            ("axe", json!({"nope": 1})),
            ("axe", json!([1, 2])),
            ("wave", json!({"categories": {"error": {"items": {"x": {"count": -1}}}}})),
            ("htmlcs", json!(null)),
            ("alfa", json!({"results": "many"})),
        ] {
            let n = normalize(tool, payload);
            assert!(n.standard.prevented, "{tool}");
            assert!(n.error.is_some());
            assert_eq!(n.standard.totals, [0, 0, 0, 0]);
        }
    }
}
