//! Job preparation from a script and a target list, and job partitioning
//! across workers with deterministic merging of the shard reports.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::model::{
    elapsed_seconds, format_timestamp, is_safe_id, parse_timestamp, Act, ActResult, ActType, Job, JobData,
    ModelError, Report, Target,
};

/// Stand-in for the target URL in a script's navigate acts.
pub const TARGET_PLACEHOLDER: &str = "__TARGET__";
/// Job extra recording a shard's origin.
pub const PARTITION_KEY: &str = "partition";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub id: String,
    #[serde(default)]
    pub what: String,
    pub acts: Vec<Act>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub id: String,
    #[serde(default)]
    pub what: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TargetList {
    pub targets: Vec<TargetEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum JobgenError {
    #[error("script {0} has no test act")]
    NoTestAct(String),
    #[error("id {0:?} is not usable as a job id")]
    BadId(String),
    #[error("duplicate target id {0}")]
    DuplicateTarget(String),
    #[error("target {id}: {url:?} is not an absolute URL")]
    RelativeUrl { id: String, url: String },
    #[error("no navigate act uses the {TARGET_PLACEHOLDER} placeholder")]
    PlaceholderMissing,
    #[error("shard report {0} does not belong to job {1}")]
    ForeignShard(String, String),
    #[error("shard report {0}: {1}")]
    BadShard(String, String),
    #[error("duplicate act coverage: act {0}")]
    DuplicateCoverage(usize),
    #[error("missing act coverage: act {0}")]
    MissingCoverage(usize),
    #[error("no shard reports to merge")]
    NoShards,
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl Script {
    pub fn check(&self) -> Result<(), JobgenError> {
        if !is_safe_id(&self.id) {
            return Err(JobgenError::BadId(self.id.clone()));
        }
        if !self.acts.iter().any(Act::is_test) {
            return Err(JobgenError::NoTestAct(self.id.clone()));
        }
        Ok(())
    }

    fn uses_placeholder(&self) -> bool {
        self.acts.iter().any(|a| {
            a.act_type == ActType::Navigate && a.url.as_deref().is_some_and(|u| u.contains(TARGET_PLACEHOLDER))
        })
    }
}

impl TargetList {
    pub fn check(&self) -> Result<(), JobgenError> {
        let mut seen = HashSet::new();
        for t in &self.targets {
            if !is_safe_id(&t.id) {
                return Err(JobgenError::BadId(t.id.clone()));
            }
            if !seen.insert(t.id.as_str()) {
                return Err(JobgenError::DuplicateTarget(t.id.clone()));
            }
            if url::Url::parse(&t.url).is_err() {
                return Err(JobgenError::RelativeUrl { id: t.id.clone(), url: t.url.clone() });
            }
        }
        Ok(())
    }
}

/// One job per target, with the target URL substituted for the placeholder.
pub fn make_jobs(script: &Script, targets: &TargetList, time_stamp: &str) -> Result<Vec<Job>, JobgenError> {
    script.check()?;
    targets.check()?;
    if !targets.targets.is_empty() && !script.uses_placeholder() {
        return Err(JobgenError::PlaceholderMissing);
    }
    Ok(targets
        .targets
        .iter()
        .map(|target| {
            let acts = script
                .acts
                .iter()
                .map(|act| {
                    let mut act = act.clone();
                    if let Some(url) = &act.url {
                        act.url = Some(url.replace(TARGET_PLACEHOLDER, &target.url));
                    }
                    act.what = act.what.replace(TARGET_PLACEHOLDER, &target.url);
                    act
                })
                .collect();
            let mut extras = BTreeMap::new();
            extras.insert("sources".to_string(), json!({"script": script.id, "target": target.id}));
            Job {
                id: format!("{}-{}", script.id, target.id),
                what: script.what.clone(),
                time_stamp: time_stamp.to_string(),
                target: Target { url: target.url.clone(), what: target.what.clone() },
                acts,
                extras,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct PartitionInfo {
    source: String,
    shard: usize,
    shards: usize,
    #[serde(rename = "actIndexes")]
    act_indexes: Vec<usize>,
}

/// Splits a job's test acts round-robin across `shards` shards.
///
/// Every non-test act is copied into each shard in its original position
/// relative to the test acts; shards left without a test act are dropped.
/// Shard `k` (1-based) gets id `<job.id>.p<k>`. With one shard the job is
/// returned unchanged.
pub fn partition(job: &Job, shards: usize) -> Vec<Job> {
    let shards = shards.max(1);
    if shards == 1 {
        return vec![job.clone()];
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); shards];
    let mut test_index = 0;
    for (i, act) in job.acts.iter().enumerate() {
        if act.is_test() {
            members[test_index % shards].push(i);
            test_index += 1;
        } else {
            for m in &mut members {
                m.push(i);
            }
        }
    }
    let kept: Vec<Vec<usize>> = members
        .into_iter()
        .filter(|m| m.iter().any(|&i| job.acts[i].is_test()))
        .collect();
    let count = kept.len();
    kept.into_iter()
        .enumerate()
        .map(|(k, indexes)| {
            let mut shard = job.clone();
            shard.id = format!("{}.p{}", job.id, k + 1);
            shard.acts = indexes.iter().map(|&i| job.acts[i].clone()).collect();
            let info = PartitionInfo { source: job.id.clone(), shard: k + 1, shards: count, act_indexes: indexes };
            shard.extras.insert(PARTITION_KEY.to_string(), serde_json::to_value(info).expect("serializable"));
            shard
        })
        .collect()
}

fn shard_indexes(report: &Report, original: &Job) -> Result<Vec<usize>, JobgenError> {
    let id = &report.job.id;
    let indexes = match report.job.extras.get(PARTITION_KEY) {
        Some(raw) => {
            let info: PartitionInfo = serde_json::from_value(raw.clone())
                .map_err(|e| JobgenError::BadShard(id.clone(), e.to_string()))?;
            if info.source != original.id {
                return Err(JobgenError::ForeignShard(id.clone(), original.id.clone()));
            }
            info.act_indexes
        }
        None if *id == original.id => (0..report.job.acts.len()).collect(),
        None => return Err(JobgenError::ForeignShard(id.clone(), original.id.clone())),
    };
    if indexes.len() != report.job.acts.len() || report.act_results.len() != indexes.len() {
        return Err(JobgenError::BadShard(id.clone(), "act and result counts disagree".into()));
    }
    for (pos, &orig) in indexes.iter().enumerate() {
        if original.acts.get(orig) != Some(&report.job.acts[pos]) {
            return Err(JobgenError::BadShard(id.clone(), format!("act {pos} does not match original act {orig}")));
        }
    }
    Ok(indexes)
}

/// Reassembles shard reports into a report on the original job.
///
/// Each test act must be covered by exactly one shard; replicated non-test
/// act results come from the first shard listed.
pub fn merge(shard_reports: &[Report], original: &Job) -> Result<Report, JobgenError> {
    if shard_reports.is_empty() {
        return Err(JobgenError::NoShards);
    }
    let mut slots: Vec<Option<ActResult>> = vec![None; original.acts.len()];
    for report in shard_reports {
        let indexes = shard_indexes(report, original)?;
        for (pos, orig) in indexes.into_iter().enumerate() {
            let result = &report.act_results[pos];
            match (&slots[orig], original.acts[orig].is_test()) {
                (Some(_), true) => return Err(JobgenError::DuplicateCoverage(orig)),
                (Some(_), false) => {}
                (None, _) => slots[orig] = Some(result.clone()),
            }
        }
    }
    let act_results = slots
        .into_iter()
        .enumerate()
        .map(|(i, slot)| slot.ok_or(JobgenError::MissingCoverage(i)))
        .collect::<Result<Vec<_>, _>>()?;

    let mut start = None;
    let mut end = None;
    let mut agents = BTreeSet::new();
    let mut error_count = 0;
    for report in shard_reports {
        let s = parse_timestamp(&report.job_data.start_time)?;
        let e = parse_timestamp(&report.job_data.end_time)?;
        start = Some(start.map_or(s, |t: chrono::DateTime<chrono::Utc>| t.min(s)));
        end = Some(end.map_or(e, |t: chrono::DateTime<chrono::Utc>| t.max(e)));
        agents.insert(report.job_data.agent.clone());
        error_count += report.job_data.error_count;
    }
    let (start, end) = (start.expect("non-empty"), end.expect("non-empty"));
    Ok(Report {
        job: original.clone(),
        act_results,
        job_data: JobData {
            start_time: format_timestamp(start),
            end_time: format_timestamp(end),
            elapsed_seconds: elapsed_seconds(start, end),
            agent: agents.into_iter().collect::<Vec<_>>().join(","),
            error_count,
        },
    })
}

/// Rebuilds the job that was partitioned into the given shard reports.
///
/// A single report without partition metadata is taken as its own job.
pub fn reconstruct_job(shard_reports: &[Report]) -> Result<Job, JobgenError> {
    let first = shard_reports.first().ok_or(JobgenError::NoShards)?;
    let Some(raw) = first.job.extras.get(PARTITION_KEY) else {
        return Ok(first.job.clone());
    };
    let first_info: PartitionInfo = serde_json::from_value(raw.clone())
        .map_err(|e| JobgenError::BadShard(first.job.id.clone(), e.to_string()))?;
    let mut slots: Vec<Option<Act>> = Vec::new();
    for report in shard_reports {
        let id = &report.job.id;
        let info: PartitionInfo = report
            .job
            .extras
            .get(PARTITION_KEY)
            .ok_or_else(|| JobgenError::ForeignShard(id.clone(), first_info.source.clone()))
            .and_then(|v| {
                serde_json::from_value(v.clone()).map_err(|e| JobgenError::BadShard(id.clone(), e.to_string()))
            })?;
        if info.source != first_info.source {
            return Err(JobgenError::ForeignShard(id.clone(), first_info.source.clone()));
        }
        if info.act_indexes.len() != report.job.acts.len() {
            return Err(JobgenError::BadShard(id.clone(), "act count disagrees with its index map".into()));
        }
        for (act, &index) in report.job.acts.iter().zip(&info.act_indexes) {
            if slots.len() <= index {
                slots.resize(index + 1, None);
            }
            slots[index].get_or_insert_with(|| act.clone());
        }
    }
    let acts = slots
        .into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or(JobgenError::MissingCoverage(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut job = first.job.clone();
    job.id = first_info.source;
    job.extras.remove(PARTITION_KEY);
    job.acts = acts;
    Ok(job)
}

/// Report JSON with wall-clock fields blanked, for comparing runs.
pub fn erase_timing(report: &Report) -> Value {
    let mut report = report.clone();
    report.job_data.start_time.clear();
    report.job_data.end_time.clear();
    report.job_data.elapsed_seconds = 0;
    for result in &mut report.act_results {
        if let Some(tool) = result.as_tool_mut() {
            tool.elapsed_millis = 0;
        }
    }
    serde_json::to_value(&report).expect("serializable")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_job, Act, StandardResult, ToolResult};

    fn script() -> Script {
        Script {
            id: "scriptA".into(),
            what: "basic".into(),
            acts: vec![Act::navigate(TARGET_PLACEHOLDER), Act::test("native", "native rules"), Act::test("axe", "axe")],
        }
    }

    fn table2() -> TargetList {
        let rows = [
            ("w3c", "World Wide Web Consortium", "https://www.w3.org/"),
            ("mozilla", "Mozilla Foundation", "https://foundation.mozilla.org/en"),
            ("wikFnd", "Wikimedia Foundation", "https://www.wikimedia.org/"),
            ("acm", "Association for Computing Machinery", "https://www.acm.org/"),
        ];
        TargetList {
            targets: rows
                .iter()
                .map(|(id, what, url)| TargetEntry { id: id.to_string(), what: what.to_string(), url: url.to_string() })
                .collect(),
        }
    }

    #[test]
    fn jobs_for_table2_targets() {
        let jobs = make_jobs(&script(), &table2(), "2023-08-18T12:00:00Z").unwrap();
        assert_eq!(jobs.len(), 4);
        let w3c = &jobs[0];
        assert_eq!(w3c.id, "scriptA-w3c");
        assert_eq!(w3c.acts[0].url.as_deref(), Some("https://www.w3.org/"));
        assert_eq!(w3c.target.what, "World Wide Web Consortium");
        for job in &jobs {
            let text = crate::model::serialize_job(job);
            assert_eq!(&parse_job(&text).unwrap(), job);
        }
    }

    #[test]
    fn empty_targets_and_missing_placeholder() {
        assert!(make_jobs(&script(), &TargetList::default(), "t").unwrap().is_empty());
        let mut s = script();
        s.acts[0] = Act::navigate("https://example.org/");
        assert_eq!(make_jobs(&s, &table2(), "t").unwrap_err(), JobgenError::PlaceholderMissing);
    }

    #[test]
    fn bad_targets_and_scripts() {
        let mut t = table2();
        t.targets[1].id = "w3c".into();
        assert!(matches!(make_jobs(&script(), &t, "t"), Err(JobgenError::DuplicateTarget(_))));
        let mut t = table2();
        t.targets[0].url = "www.w3.org".into();
        assert!(matches!(make_jobs(&script(), &t, "t"), Err(JobgenError::RelativeUrl { .. })));
        let mut s = script();
        s.acts.truncate(1);
        assert!(matches!(make_jobs(&s, &table2(), "t"), Err(JobgenError::NoTestAct(_))));
    }

    fn four_test_job() -> Job {
        let mut job = make_jobs(&script(), &table2(), "2023-08-18T12:00:00Z").unwrap().remove(0);
        job.acts.push(Act::test("wave", "wave"));
        job.acts.push(Act::test("htmlcs", "htmlcs"));
        job
    }

    #[test]
    fn single_shard_is_identity() {
        let job = four_test_job();
        assert_eq!(partition(&job, 1), vec![job]);
    }

    #[test]
    fn round_robin_two_shards() {
        let job = four_test_job();
        let shards = partition(&job, 2);
        assert_eq!(shards.len(), 2);
        let tools = |j: &Job| j.acts.iter().map(|a| a.tool().to_string()).collect::<Vec<_>>();
        assert_eq!(tools(&shards[0]), ["", "native", "wave"]);
        assert_eq!(tools(&shards[1]), ["", "axe", "htmlcs"]);
        assert_eq!(shards[0].id, format!("{}.p1", job.id));
        assert_eq!(shards[1].acts[0].act_type, ActType::Navigate);
    }

    #[test]
    fn empty_shards_dropped() {
        let job = make_jobs(&script(), &table2(), "t").unwrap().remove(0);
        let shards = partition(&job, 5);
        assert_eq!(shards.len(), 2);
        assert!(shards.iter().all(|s| s.extras[PARTITION_KEY]["shards"] == 2));
    }

    fn fake_run(job: &Job, start: &str, end: &str) -> Report {
        let act_results = job
            .acts
            .iter()
            .map(|a| match a.act_type {
                ActType::Test => ActResult::Tool(ToolResult {
                    tool_code: a.tool().into(),
                    native: Value::Null,
                    standard: StandardResult::default(),
                    elapsed_millis: 3,
                    error: None,
                }),
                _ => ActResult::Navigation { url: a.url.clone().unwrap_or_default(), ok: true, status: Some(200), error: None },
            })
            .collect();
        Report {
            job: job.clone(),
            act_results,
            job_data: JobData {
                start_time: start.into(),
                end_time: end.into(),
                elapsed_seconds: 0,
                agent: "a".into(),
                error_count: 0,
            },
        }
    }

    #[test]
    fn merge_restores_order_and_timing() {
        let job = four_test_job();
        let shards = partition(&job, 3);
        let reports: Vec<Report> = shards
            .iter()
            .enumerate()
            .map(|(i, s)| fake_run(s, &format!("2024-01-01T00:00:0{i}Z"), &format!("2024-01-01T00:00:1{i}Z")))
            .collect();
        let merged = merge(&reports, &job).unwrap();
        assert_eq!(merged.job, job);
        let tools: Vec<_> = merged.act_results.iter().map(|r| r.as_tool().map(|t| t.tool_code.clone())).collect();
        assert_eq!(tools, [None, Some("native".into()), Some("axe".into()), Some("wave".into()), Some("htmlcs".into())]);
        assert_eq!(merged.job_data.start_time, "2024-01-01T00:00:00Z");
        assert_eq!(merged.job_data.end_time, "2024-01-01T00:00:12Z");
        assert_eq!(merged.job_data.elapsed_seconds, 12);
        assert_eq!(erase_timing(&merged), erase_timing(&fake_run(&job, "x", "y")));
    }

    #[test]
    fn reconstructs_the_partitioned_job() {
        let job = four_test_job();
        for n in 1..=4 {
            let t = "2024-01-01T00:00:00Z";
            let reports: Vec<Report> = partition(&job, n).iter().map(|s| fake_run(s, t, t)).collect();
            assert_eq!(reconstruct_job(&reports).unwrap(), job, "{n} shards");
        }
        assert_eq!(reconstruct_job(&[]).unwrap_err(), JobgenError::NoShards);
    }

    #[test]
    fn merge_single_full_report() {
        let job = four_test_job();
        let report = fake_run(&job, "2024-01-01T00:00:00Z", "2024-01-01T00:00:04Z");
        let merged = merge(std::slice::from_ref(&report), &job).unwrap();
        assert_eq!(erase_timing(&merged), erase_timing(&report));
        assert_eq!(merged.job_data.elapsed_seconds, 4);
    }

    #[test]
    fn merge_coverage_errors() {
        let job = four_test_job();
        let shards = partition(&job, 2);
        let t = "2024-01-01T00:00:00Z";
        let a = fake_run(&shards[0], t, t);
        let b = fake_run(&shards[1], t, t);
        assert_eq!(merge(&[a.clone(), a.clone()], &job).unwrap_err(), JobgenError::DuplicateCoverage(1));
        assert!(matches!(merge(std::slice::from_ref(&b), &job).unwrap_err(), JobgenError::MissingCoverage(1)));
        assert_eq!(merge(&[], &job).unwrap_err(), JobgenError::NoShards);
        let mut other = job.clone();
        other.id = "other".into();
        assert!(matches!(merge(&[a, b], &other), Err(JobgenError::ForeignShard(..))));
    }
}
