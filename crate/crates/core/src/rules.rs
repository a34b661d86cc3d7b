//! The built-in `native` tool: a registry of rules evaluated over a
//! [`DocTree`], producing a [`StandardResult`] located by XPath.
//!
//! A custom rule is a [`RuleDef`] with a pure evaluation function:
//!
//! ```
//! use ensemble_audit::dom::parse_html;
//! use ensemble_audit::model::Severity;
//! use ensemble_audit::rules::{RuleDef, RuleRegistry};
//!
//! let mut registry = RuleRegistry::starter();
//! registry
//!     .register(RuleDef::new(
//!         "noMarquee",
//!         "marquee element is used",
//!         Severity::new(2).unwrap(),
//!         |tree| tree.elements_named("MARQUEE").collect(),
//!     ))
//!     .unwrap();
//! let tree = parse_html("<html lang=en><marquee>hi</marquee></html>").unwrap();
//! let result = registry.run(&tree, Some(&["noMarquee".to_string()])).unwrap();
//! assert_eq!(result.instances.len(), 1);
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::dom::{DocTree, NodeId};
use crate::model::{Instance, Location, Severity, StandardResult};

pub type Evaluate = dyn Fn(&DocTree) -> Vec<NodeId> + Send + Sync;

#[derive(Clone)]
pub struct RuleDef {
    pub rule_id: String,
    pub what: String,
    pub severity: Severity,
    evaluate: Arc<Evaluate>,
}

impl RuleDef {
    pub fn new<F>(rule_id: &str, what: &str, severity: Severity, evaluate: F) -> Self
    where
        F: Fn(&DocTree) -> Vec<NodeId> + Send + Sync + 'static,
    {
        RuleDef {
            rule_id: rule_id.to_string(),
            what: what.to_string(),
            severity,
            evaluate: Arc::new(evaluate),
        }
    }

    pub fn evaluate(&self, tree: &DocTree) -> Vec<NodeId> {
        (self.evaluate)(tree)
    }
}

impl fmt::Debug for RuleDef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RuleDef")
            .field("rule_id", &self.rule_id)
            .field("what", &self.what)
            .field("severity", &self.severity)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RuleError {
    #[error("rule {0} is already registered")]
    Duplicate(String),
    #[error("unknown rule {0}")]
    Unknown(String),
}

/// Rules keyed by ID; iteration order is ID order.
#[derive(Debug, Clone, Default)]
pub struct RuleRegistry {
    rules: BTreeMap<String, RuleDef>,
}

impl RuleRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Registry holding the ten built-in rules.
    pub fn starter() -> Self {
        let mut registry = Self::empty();
        for def in starter_rules() {
            registry.register(def).expect("starter rule IDs are unique");
        }
        registry
    }

    pub fn register(&mut self, def: RuleDef) -> Result<&mut Self, RuleError> {
        if self.rules.contains_key(&def.rule_id) {
            return Err(RuleError::Duplicate(def.rule_id));
        }
        self.rules.insert(def.rule_id.clone(), def);
        Ok(self)
    }

    pub fn contains(&self, rule_id: &str) -> bool {
        self.rules.contains_key(rule_id)
    }

    pub fn get(&self, rule_id: &str) -> Option<&RuleDef> {
        self.rules.get(rule_id)
    }

    pub fn rule_ids(&self) -> impl Iterator<Item = &str> {
        self.rules.keys().map(String::as_str)
    }

    /// Evaluates the selected rules (all when `selection` is `None`).
    ///
    /// One instance per offending node, ordered by document position and
    /// then rule ID.
    pub fn run(&self, tree: &DocTree, selection: Option<&[String]>) -> Result<StandardResult, RuleError> {
        let selected: Vec<&RuleDef> = match selection {
            None => self.rules.values().collect(),
            Some(ids) => {
                let mut unique: Vec<&str> = ids.iter().map(String::as_str).collect();
                unique.sort_unstable();
                unique.dedup();
                unique
                    .into_iter()
                    .map(|id| self.rules.get(id).ok_or_else(|| RuleError::Unknown(id.to_string())))
                    .collect::<Result<_, _>>()?
            }
        };

        let mut hits: Vec<(NodeId, &RuleDef)> = Vec::new();
        for rule in selected {
            let mut nodes = rule.evaluate(tree);
            nodes.sort_unstable();
            nodes.dedup();
            hits.extend(nodes.into_iter().filter(|&n| tree.tag(n).is_some()).map(|n| (n, rule)));
        }
        hits.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.rule_id.cmp(&b.1.rule_id)));

        let instances = hits.into_iter().map(|(node, rule)| instance_for(tree, node, rule)).collect();
        Ok(StandardResult::from_instances(instances))
    }
}

fn instance_for(tree: &DocTree, node: NodeId, rule: &RuleDef) -> Instance {
    let xpath = tree.xpath_of(node).expect("rules only report element nodes");
    let mut instance = Instance::new(&rule.rule_id, &rule.what, rule.severity)
        .with_excerpt(&tree.outer_html(node, true));
    instance.tag_name = tree.tag(node).unwrap_or_default().to_string();
    instance.id = tree.attr(node, "id").unwrap_or_default().to_string();
    instance.location = Location::xpath(xpath);
    instance
}

fn sev(level: u8) -> Severity {
    Severity::new(level).expect("starter severities are within 0-3")
}

/// Rule ID, description and default severity of each built-in rule.
pub const STARTER_RULES: [(&str, &str, u8); 10] = [
    ("imageNoAlt", "img element has no text alternative", 3),
    ("linkNoName", "link has no accessible name", 3),
    ("internalLinkBroken", "same-page link points to a missing id", 2),
    ("duplicateID", "id value is used more than once", 2),
    ("headingSkip", "heading level skips one or more levels", 1),
    ("docLangMissing", "html element has no lang attribute", 2),
    ("titleMissing", "document has no non-empty title", 2),
    ("buttonNoName", "button has no accessible name", 3),
    ("inputNoLabel", "input has no label", 3),
    ("iframeNoTitle", "iframe has no title", 2),
];

fn starter_rules() -> Vec<RuleDef> {
    STARTER_RULES
        .iter()
        .map(|&(id, what, level)| {
            let evaluate: fn(&DocTree) -> Vec<NodeId> = match id {
                "imageNoAlt" => image_no_alt,
                "linkNoName" => link_no_name,
                "internalLinkBroken" => internal_link_broken,
                "duplicateID" => duplicate_id,
                "headingSkip" => heading_skip,
                "docLangMissing" => doc_lang_missing,
                "titleMissing" => title_missing,
                "buttonNoName" => button_no_name,
                "inputNoLabel" => input_no_label,
                "iframeNoTitle" => iframe_no_title,
                _ => unreachable!("every starter rule has an evaluator"),
            };
            RuleDef::new(id, what, sev(level), evaluate)
        })
        .collect()
}

fn image_no_alt(tree: &DocTree) -> Vec<NodeId> {
    tree.elements_named("IMG").filter(|&n| tree.attr(n, "alt").is_none()).collect()
}

fn has_aria_name(tree: &DocTree, node: NodeId) -> bool {
    tree.nonblank_attr(node, "aria-label").is_some() || tree.nonblank_attr(node, "aria-labelledby").is_some()
}

fn link_no_name(tree: &DocTree) -> Vec<NodeId> {
    tree.elements_named("A")
        .filter(|&a| tree.attr(a, "href").is_some())
        .filter(|&a| {
            let named = !tree.text_content(a).trim().is_empty()
                || has_aria_name(tree, a)
                || tree.nonblank_attr(a, "title").is_some()
                || tree
                    .descendants(a)
                    .into_iter()
                    .any(|d| tree.is_tag(d, "IMG") && tree.nonblank_attr(d, "alt").is_some());
            !named
        })
        .collect()
}

fn internal_link_broken(tree: &DocTree) -> Vec<NodeId> {
    let ids: HashSet<&str> = tree.elements().filter_map(|n| tree.attr(n, "id")).collect();
    tree.elements_named("A")
        .filter(|&a| match tree.attr(a, "href").and_then(|h| h.strip_prefix('#')) {
            Some(fragment) if !fragment.is_empty() && fragment != "top" => !ids.contains(fragment),
            _ => false,
        })
        .collect()
}

/// Every use of an id after its first.
fn duplicate_id(tree: &DocTree) -> Vec<NodeId> {
    let mut seen: HashMap<&str, NodeId> = HashMap::new();
    tree.elements()
        .filter(|&n| match tree.attr(n, "id") {
            Some(id) if !id.is_empty() => seen.insert(id, n).is_some(),
            _ => false,
        })
        .collect()
}

fn heading_level(tree: &DocTree, node: NodeId) -> Option<u8> {
    match tree.tag(node)?.as_bytes() {
        [b'H', d @ b'1'..=b'6'] => Some(d - b'0'),
        _ => None,
    }
}

/// Headings deeper than one level below the preceding heading.
fn heading_skip(tree: &DocTree) -> Vec<NodeId> {
    let mut previous: Option<u8> = None;
    let mut out = Vec::new();
    for node in tree.elements() {
        if let Some(level) = heading_level(tree, node) {
            if previous.is_some_and(|p| level > p + 1) {
                out.push(node);
            }
            previous = Some(level);
        }
    }
    out
}

fn doc_lang_missing(tree: &DocTree) -> Vec<NodeId> {
    let root = tree.root();
    if tree.nonblank_attr(root, "lang").is_some() {
        Vec::new()
    } else {
        vec![root]
    }
}

/// Reports the first HEAD, or the root when there is none.
fn title_missing(tree: &DocTree) -> Vec<NodeId> {
    let has_title = tree.elements_named("TITLE").any(|t| {
        tree.ancestors(t).any(|a| tree.is_tag(a, "HEAD")) && !tree.text_content(t).trim().is_empty()
    });
    if has_title {
        return Vec::new();
    }
    vec![tree.elements_named("HEAD").next().unwrap_or(tree.root())]
}

fn button_no_name(tree: &DocTree) -> Vec<NodeId> {
    tree.elements_named("BUTTON")
        .filter(|&b| tree.text_content(b).trim().is_empty() && !has_aria_name(tree, b))
        .collect()
}

fn input_no_label(tree: &DocTree) -> Vec<NodeId> {
    let label_targets: HashSet<&str> = tree
        .elements_named("LABEL")
        .filter_map(|l| tree.nonblank_attr(l, "for"))
        .collect();
    tree.elements_named("INPUT")
        .filter(|&input| {
            let kind = tree.attr(input, "type").unwrap_or("text").to_ascii_lowercase();
            match kind.as_str() {
                "hidden" => return false,
                // Named by their value or a default caption.
                "submit" | "reset" | "button" => return false,
                "image" => return tree.nonblank_attr(input, "alt").is_none() && !has_aria_name(tree, input),
                _ => {}
            }
            let labeled = tree.attr(input, "id").is_some_and(|id| label_targets.contains(id))
                || tree.ancestors(input).any(|a| tree.is_tag(a, "LABEL"))
                || has_aria_name(tree, input)
                || tree.nonblank_attr(input, "title").is_some();
            !labeled
        })
        .collect()
}

fn iframe_no_title(tree: &DocTree) -> Vec<NodeId> {
    tree.elements_named("IFRAME").filter(|&f| tree.nonblank_attr(f, "title").is_none()).collect()
}
