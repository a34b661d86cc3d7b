//! Accessibility score: higher means more, or more serious, issues.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ensemble::{gather, IssueCatalog, IssueGroup};
use crate::model::Report;

pub const FORMULA_VERSION: &str = "sev-linear-count-log2/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreParameters {
    #[serde(rename = "formulaVersion")]
    pub formula_version: String,
    #[serde(rename = "catalogVersion")]
    pub catalog_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub total: f64,
    pub components: BTreeMap<String, f64>,
    pub parameters: ScoreParameters,
}

/// `weight × (1 + maxSeverity) × log2(1 + maxCount)`.
///
/// The largest per-tool count is used rather than the sum, so tools that
/// disagree wildly about instance counts do not compound.
pub fn score_issue(group: &IssueGroup, weight: f64) -> f64 {
    let severity = 1.0 + f64::from(group.max_severity.value());
    weight * severity * (1.0 + group.max_count as f64).log2()
}

pub fn score_groups(groups: &[IssueGroup], catalog: &IssueCatalog) -> Score {
    let components: BTreeMap<String, f64> = groups
        .iter()
        .map(|g| (g.issue_id.clone(), score_issue(g, catalog.weight(&g.issue_id))))
        .collect();
    Score {
        total: components.values().sum(),
        components,
        parameters: ScoreParameters {
            formula_version: FORMULA_VERSION.to_string(),
            catalog_version: catalog.version().to_string(),
        },
    }
}

/// Gathers the report's findings and sums the issue scores. Prevented tools
/// contribute nothing.
pub fn score_report(report: &Report, catalog: &IssueCatalog) -> Score {
    score_groups(&gather(report, catalog), catalog)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScoringError {
    #[error("duplicate target {0}")]
    DuplicateTarget(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranked<T> {
    pub rank: usize,
    #[serde(rename = "targetID")]
    pub target_id: String,
    #[serde(flatten)]
    pub item: T,
}

/// Orders targets best first: ascending total, ties by target ID.
pub fn compare_scores(scores: Vec<(String, Score)>) -> Result<Vec<Ranked<Score>>, ScoringError> {
    rank_by(scores, |s| s.total)
}

/// Ranks arbitrary entries by a score extracted from each.
pub fn rank_by<T>(entries: Vec<(String, T)>, total: impl Fn(&T) -> f64) -> Result<Vec<Ranked<T>>, ScoringError> {
    let mut seen = HashSet::new();
    if let Some((dup, _)) = entries.iter().find(|(id, _)| !seen.insert(id.clone())) {
        return Err(ScoringError::DuplicateTarget(dup.clone()));
    }
    let mut entries = entries;
    entries.sort_by(|a, b| total(&a.1).total_cmp(&total(&b.1)).then_with(|| a.0.cmp(&b.0)));
    Ok(entries
        .into_iter()
        .enumerate()
        .map(|(i, (target_id, item))| Ranked { rank: i + 1, target_id, item })
        .collect())
}
