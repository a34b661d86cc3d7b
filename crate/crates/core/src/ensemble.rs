//! Tool-rule classification into tool-agnostic issues, cross-tool
//! gathering, and clustering of instances that likely denote one defect.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dom::normalize_xpath;
use crate::model::{Instance, LocationType, Report, Severity};

const STARTER_CATALOG: &str = include_str!("../../../fixtures/catalog.json");

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.8;
/// Weight given to issues synthesized for unclassified rules.
pub const UNCLASSIFIED_WEIGHT: f64 = 1.0;
pub const UNCLASSIFIED_PREFIX: &str = "unclassified";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleRef {
    pub tool: String,
    /// Exact rule ID, or a prefix followed by `*`.
    pub pattern: String,
}

impl RuleRef {
    fn prefix(&self) -> Option<&str> {
        self.pattern.strip_suffix('*')
    }

    fn matches(&self, rule_id: &str) -> bool {
        match self.prefix() {
            Some(p) => rule_id.starts_with(p),
            None => rule_id == self.pattern,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssueMapEntry {
    #[serde(rename = "issueID")]
    pub issue_id: String,
    #[serde(default)]
    pub wcag: String,
    pub weight: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub what: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub advice: String,
    #[serde(rename = "ruleRefs")]
    pub rule_refs: Vec<RuleRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CatalogFile {
    #[serde(default)]
    version: String,
    #[serde(rename = "jaccardThreshold", default = "default_threshold")]
    jaccard_threshold: f64,
    issues: Vec<IssueMapEntry>,
}

fn default_threshold() -> f64 {
    DEFAULT_JACCARD_THRESHOLD
}

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed catalog: {0}")]
    Json(String),
    #[error("duplicate issueID {0}")]
    DuplicateIssue(String),
    #[error("ambiguous rule claim: ({tool}, {pattern}) is claimed by {first} and {second}")]
    Ambiguous { tool: String, pattern: String, first: String, second: String },
    #[error("issue {0}: {1}")]
    Invalid(String, String),
}

/// Validated tool-rule to issue mapping.
#[derive(Debug, Clone)]
pub struct IssueCatalog {
    file: CatalogFile,
    by_id: HashMap<String, usize>,
    /// Per tool: (pattern, issue index).
    by_tool: HashMap<String, Vec<(RuleRef, usize)>>,
}

impl IssueCatalog {
    pub fn starter() -> Self {
        Self::from_json(STARTER_CATALOG).expect("starter catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, CatalogError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| CatalogError::Json(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: CatalogFile) -> Result<Self, CatalogError> {
        if !(0.0..=1.0).contains(&file.jaccard_threshold) {
            return Err(CatalogError::Json("jaccardThreshold must lie in [0, 1]".into()));
        }
        let mut by_id = HashMap::new();
        let mut by_tool: HashMap<String, Vec<(RuleRef, usize)>> = HashMap::new();
        for (index, issue) in file.issues.iter().enumerate() {
            if issue.issue_id.is_empty() || issue.issue_id.starts_with(UNCLASSIFIED_PREFIX) {
                return Err(CatalogError::Invalid(issue.issue_id.clone(), "reserved or empty issueID".into()));
            }
            if !(issue.weight > 0.0 && issue.weight.is_finite()) {
                return Err(CatalogError::Invalid(issue.issue_id.clone(), "weight must be positive".into()));
            }
            if by_id.insert(issue.issue_id.clone(), index).is_some() {
                return Err(CatalogError::DuplicateIssue(issue.issue_id.clone()));
            }
            for rule_ref in &issue.rule_refs {
                if rule_ref.pattern.is_empty() || rule_ref.pattern == "*" {
                    return Err(CatalogError::Invalid(issue.issue_id.clone(), "empty rule pattern".into()));
                }
                let claims = by_tool.entry(rule_ref.tool.clone()).or_default();
                if let Some((_, other)) = claims.iter().find(|(r, i)| *i != index && conflicts(r, rule_ref)) {
                    return Err(CatalogError::Ambiguous {
                        tool: rule_ref.tool.clone(),
                        pattern: rule_ref.pattern.clone(),
                        first: file.issues[*other].issue_id.clone(),
                        second: issue.issue_id.clone(),
                    });
                }
                claims.push((rule_ref.clone(), index));
            }
        }
        Ok(IssueCatalog { file, by_id, by_tool })
    }

    pub fn version(&self) -> &str {
        &self.file.version
    }

    pub fn jaccard_threshold(&self) -> f64 {
        self.file.jaccard_threshold
    }

    pub fn issues(&self) -> &[IssueMapEntry] {
        &self.file.issues
    }

    pub fn issue(&self, issue_id: &str) -> Option<&IssueMapEntry> {
        self.by_id.get(issue_id).map(|&i| &self.file.issues[i])
    }

    /// Catalog weight of an issue; unclassified issues weigh 1.
    pub fn weight(&self, issue_id: &str) -> f64 {
        self.issue(issue_id).map_or(UNCLASSIFIED_WEIGHT, |i| i.weight)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("catalog is serializable")
    }

    /// Issue for a tool rule. The longest matching pattern wins, an exact
    /// pattern beating any prefix; with no match the result is
    /// `unclassified:<tool>:<rule>`.
    pub fn classify(&self, tool: &str, rule_id: &str) -> String {
        let best = self.by_tool.get(tool).and_then(|claims| {
            claims
                .iter()
                .filter(|(r, _)| r.matches(rule_id))
                .max_by_key(|(r, _)| (r.prefix().is_none(), r.prefix().map_or(usize::MAX, str::len)))
        });
        match best {
            Some((_, index)) => self.file.issues[*index].issue_id.clone(),
            None => format!("{UNCLASSIFIED_PREFIX}:{tool}:{rule_id}"),
        }
    }
}

/// Whether two claims from different issues could match the same rule ID.
/// A literal inside another issue's prefix is an allowed exception, since
/// exact matches take precedence.
fn conflicts(a: &RuleRef, b: &RuleRef) -> bool {
    match (a.prefix(), b.prefix()) {
        (None, None) => a.pattern == b.pattern,
        (Some(p), Some(q)) => p.starts_with(q) || q.starts_with(p),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupedInstance {
    #[serde(rename = "toolCode")]
    pub tool_code: String,
    #[serde(flatten)]
    pub instance: Instance,
}

/// Every tool's complaints about one issue in one report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IssueGroup {
    #[serde(rename = "issueID")]
    pub issue_id: String,
    pub wcag: String,
    #[serde(rename = "perToolCounts")]
    pub per_tool_counts: BTreeMap<String, u64>,
    #[serde(rename = "maxCount")]
    pub max_count: u64,
    #[serde(rename = "maxSeverity")]
    pub max_severity: Severity,
    pub instances: Vec<GroupedInstance>,
    pub clusters: Vec<Vec<usize>>,
}

impl IssueGroup {
    pub fn new(issue_id: &str, wcag: &str) -> Self {
        IssueGroup {
            issue_id: issue_id.to_string(),
            wcag: wcag.to_string(),
            per_tool_counts: BTreeMap::new(),
            max_count: 0,
            max_severity: Severity::new(0).expect("0 is a severity"),
            instances: Vec::new(),
            clusters: Vec::new(),
        }
    }

    pub fn push(&mut self, tool_code: &str, instance: Instance) {
        let count = self.per_tool_counts.entry(tool_code.to_string()).or_default();
        *count += u64::from(instance.count);
        self.max_count = self.max_count.max(*count);
        self.max_severity = self.max_severity.max(instance.ordinal_severity);
        self.instances.push(GroupedInstance { tool_code: tool_code.to_string(), instance });
    }
}

/// Groups every instance of every non-prevented tool result by issue.
///
/// Groups are ordered by descending maximum severity, then issue ID;
/// instances within a group keep act order.
pub fn gather(report: &Report, catalog: &IssueCatalog) -> Vec<IssueGroup> {
    let mut groups: BTreeMap<String, IssueGroup> = BTreeMap::new();
    for result in report.tool_results().filter(|r| !r.standard.prevented) {
        for instance in &result.standard.instances {
            let issue_id = catalog.classify(&result.tool_code, &instance.rule_id);
            let group = groups.entry(issue_id.clone()).or_insert_with(|| {
                let wcag = catalog.issue(&issue_id).map_or("", |i| i.wcag.as_str());
                IssueGroup::new(&issue_id, wcag)
            });
            group.push(&result.tool_code, instance.clone());
        }
    }
    let threshold = catalog.jaccard_threshold();
    let mut out: Vec<IssueGroup> = groups
        .into_values()
        .map(|mut g| {
            g.clusters = match_instances(&g, threshold);
            g
        })
        .collect();
    out.sort_by(|a, b| b.max_severity.cmp(&a.max_severity).then_with(|| a.issue_id.cmp(&b.issue_id)));
    out
}

/// Lowercase alphanumeric tokens of an excerpt.
pub fn excerpt_tokens(excerpt: &str) -> BTreeSet<String> {
    excerpt
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

struct MatchKey {
    xpath: Option<String>,
    tag: String,
    tokens: BTreeSet<String>,
}

impl MatchKey {
    fn of(instance: &Instance) -> Self {
        let xpath = match instance.location.loc_type {
            LocationType::Xpath => normalize_xpath(&instance.location.spec),
            _ => None,
        };
        MatchKey { xpath, tag: instance.tag_name.clone(), tokens: excerpt_tokens(&instance.excerpt) }
    }

    fn same_defect(&self, other: &MatchKey, threshold: f64) -> bool {
        if let (Some(a), Some(b)) = (&self.xpath, &other.xpath) {
            if a == b {
                return true;
            }
        }
        !self.tokens.is_empty()
            && !other.tokens.is_empty()
            && self.tag == other.tag
            && jaccard(&self.tokens, &other.tokens) >= threshold
    }
}

/// Greedy clustering in instance order: each instance joins the first
/// cluster holding a member it matches, else starts a new one.
///
/// Two instances match when their XPaths agree after normalization, or when
/// their tag names agree and their excerpt token sets have Jaccard
/// similarity at or above `threshold`.
pub fn match_instances(group: &IssueGroup, threshold: f64) -> Vec<Vec<usize>> {
    let keys: Vec<MatchKey> = group.instances.iter().map(|g| MatchKey::of(&g.instance)).collect();
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, key) in keys.iter().enumerate() {
        match clusters.iter_mut().find(|c| c.iter().any(|&j| keys[j].same_defect(key, threshold))) {
            Some(cluster) => cluster.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters
}

/// Distinct issue IDs across a set of groups.
pub fn issue_ids(groups: &[IssueGroup]) -> HashSet<&str> {
    groups.iter().map(|g| g.issue_id.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Location, Severity};

    fn inst(rule: &str, sev: u8, tag: &str, loc: Location, excerpt: &str) -> Instance {
        let mut i = Instance::new(rule, "", Severity::new(sev).unwrap()).with_excerpt(excerpt);
        i.tag_name = tag.into();
        i.location = loc;
        i
    }

    fn group_of(items: Vec<(&str, Instance)>) -> IssueGroup {
        let mut g = IssueGroup::new("x", "");
        for (tool, i) in items {
            g.push(tool, i);
        }
        g
    }

    #[test]
    fn starter_catalog_classifies_internal_links() {
        let cat = IssueCatalog::starter();
        assert_eq!(cat.issue("internalLinkBroken").unwrap().wcag, "1.3.1");
        assert_eq!(cat.classify("htmlcs", "AAA.2_4_1.G1,G123,G124.NoSuchID"), "internalLinkBroken");
        assert_eq!(cat.classify("wave", "link_internal_broken"), "internalLinkBroken");
        assert_eq!(cat.classify("native", "internalLinkBroken"), "internalLinkBroken");
        assert_eq!(cat.classify("axe", "made-up-rule"), "unclassified:axe:made-up-rule");
    }

    #[test]
    fn starter_catalog_covers_native_rules() {
        let cat = IssueCatalog::starter();
        for (rule, _, _) in crate::rules::STARTER_RULES {
            assert!(!cat.classify("native", rule).starts_with(UNCLASSIFIED_PREFIX), "{rule}");
        }
        assert!(cat.issues().len() >= 15);
        let refs: usize = cat.issues().iter().map(|i| i.rule_refs.len()).sum();
        assert!(refs >= 40, "{refs}");
    }

    #[test]
    fn ambiguous_claims_rejected() {
        let text = r#"{"issues":[
            {"issueID":"a","wcag":"1.3.1","weight":1,"ruleRefs":[{"tool":"wave","pattern":"link_internal_broken"}]},
            {"issueID":"b","wcag":"2.4.4","weight":1,"ruleRefs":[{"tool":"wave","pattern":"link_internal_broken"}]}]}"#;
        let err = IssueCatalog::from_json(text).unwrap_err();
        assert!(err.to_string().contains("ambiguous"), "{err}");

        let prefixes = r#"{"issues":[
            {"issueID":"a","weight":1,"ruleRefs":[{"tool":"axe","pattern":"aria-*"}]},
            {"issueID":"b","weight":1,"ruleRefs":[{"tool":"axe","pattern":"aria-valid*"}]}]}"#;
        assert!(matches!(IssueCatalog::from_json(prefixes), Err(CatalogError::Ambiguous { .. })));
    }

    #[test]
    fn duplicate_issue_rejected() {
        let text = r#"{"issues":[{"issueID":"a","weight":1,"ruleRefs":[]},{"issueID":"a","weight":2,"ruleRefs":[]}]}"#;
        assert!(matches!(IssueCatalog::from_json(text), Err(CatalogError::DuplicateIssue(_))));
    }

    #[test]
    fn empty_catalog_classifies_everything_unclassified() {
        let cat = IssueCatalog::from_json(r#"{"issues":[]}"#).unwrap();
        assert_eq!(cat.classify("native", "imageNoAlt"), "unclassified:native:imageNoAlt");
        assert_eq!(cat.weight("unclassified:native:imageNoAlt"), 1.0);
        assert_eq!(cat.jaccard_threshold(), DEFAULT_JACCARD_THRESHOLD);
    }

    #[test]
    fn longest_match_wins() {
        let text = r#"{"issues":[
            {"issueID":"general","weight":1,"ruleRefs":[{"tool":"axe","pattern":"aria-*"}]},
            {"issueID":"specific","weight":1,"ruleRefs":[{"tool":"axe","pattern":"aria-hidden-focus"}]},
            {"issueID":"same","weight":1,"ruleRefs":[{"tool":"axe","pattern":"color-*"},{"tool":"axe","pattern":"color-contrast*"}]}]}"#;
        let cat = IssueCatalog::from_json(text).unwrap();
        assert_eq!(cat.classify("axe", "aria-hidden-focus"), "specific");
        assert_eq!(cat.classify("axe", "aria-roles"), "general");
        assert_eq!(cat.classify("axe", "color-contrast-enhanced"), "same");
        assert_eq!(cat.classify("wave", "aria-roles"), "unclassified:wave:aria-roles");
    }

    #[test]
    fn classification_survives_reserialization() {
        let cat = IssueCatalog::starter();
        let again = IssueCatalog::from_json(&cat.to_json()).unwrap();
        for issue in cat.issues() {
            for r in issue.rule_refs.iter().filter(|r| !r.pattern.ends_with('*')) {
                assert_eq!(again.classify(&r.tool, &r.pattern), cat.classify(&r.tool, &r.pattern));
                assert_eq!(cat.classify(&r.tool, &r.pattern), issue.issue_id);
            }
        }
    }

    #[test]
    fn group_counts_keep_divergence() {
        let mut a = inst("r", 2, "A", Location::none(), "");
        a.count = 2;
        let mut b = inst("s", 3, "", Location::none(), "");
        b.count = 240;
        let g = group_of(vec![("toolA", a), ("toolB", b)]);
        assert_eq!(g.per_tool_counts["toolA"], 2);
        assert_eq!(g.per_tool_counts["toolB"], 240);
        assert_eq!(g.max_count, 240);
        assert_eq!(g.max_severity.value(), 3);
    }

    #[test]
    fn identical_xpaths_cluster() {
        let g = group_of(vec![
            ("native", inst("a", 3, "IMG", Location::xpath("/html/body/img[1]"), "")),
            ("alfa", inst("b", 2, "", Location::xpath("/html[1]/body[1]/img"), "")),
        ]);
        assert_eq!(match_instances(&g, 0.8), vec![vec![0, 1]]);
    }

    #[test]
    fn identical_excerpts_cluster() {
        let tokens = excerpt_tokens("<img src=\"x.jpg\">");
        assert_eq!(jaccard(&tokens, &tokens), 1.0);
        let g = group_of(vec![
            ("native", inst("a", 3, "IMG", Location::xpath("/html/body/img[1]"), "<img src=\"x.jpg\">")),
            ("htmlcs", inst("b", 2, "IMG", Location::none(), "<img src=\"x.jpg\">")),
        ]);
        assert_eq!(match_instances(&g, 0.8), vec![vec![0, 1]]);
    }

    #[test]
    fn tag_gate_separates() {
        let g = group_of(vec![
            ("native", inst("a", 3, "IMG", Location::none(), "<img src=\"x.jpg\">")),
            ("axe", inst("b", 3, "A", Location::none(), "<img src=\"x.jpg\">")),
        ]);
        assert_eq!(match_instances(&g, 0.8), vec![vec![0], vec![1]]);
    }

    #[test]
    fn locationless_instances_stay_apart() {
        let g = group_of(vec![
            ("wave", inst("a", 3, "", Location::none(), "")),
            ("wave", inst("a", 3, "", Location::none(), "")),
        ]);
        assert_eq!(match_instances(&g, 0.8), vec![vec![0], vec![1]]);
    }

    #[test]
    fn jaccard_below_threshold() {
        // {img, src, a, png} vs {img, src, b, png}: 3 shared of 5.
        let a = excerpt_tokens("<img src=\"a.png\">");
        let b = excerpt_tokens("<img src=\"b.png\">");
        assert!((jaccard(&a, &b) - 0.6).abs() < 1e-12);
        let g = group_of(vec![
            ("x", inst("a", 1, "IMG", Location::none(), "<img src=\"a.png\">")),
            ("y", inst("a", 1, "IMG", Location::none(), "<img src=\"b.png\">")),
        ]);
        assert_eq!(match_instances(&g, 0.8).len(), 2);
        assert_eq!(match_instances(&g, 0.6).len(), 1);
    }
}
