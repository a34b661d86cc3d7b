//! Report elaboration, HTML digests, comparative pages and score export.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::ensemble::{gather, IssueCatalog};
use crate::model::{elapsed_seconds, format_timestamp, ActResult, Job, JobData, Report};
use crate::scoring::{score_groups, Ranked};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ReportError {
    #[error("{results} act results for {acts} acts")]
    Misaligned { acts: usize, results: usize },
    #[error("a comparison needs at least one target")]
    EmptyComparison,
}

/// Who ran a job, and when.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunEnv {
    pub agent: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
}

/// Attaches act results and whole-job data to a job.
pub fn elaborate(job: Job, act_results: Vec<ActResult>, env: &RunEnv) -> Result<Report, ReportError> {
    if act_results.len() != job.acts.len() {
        return Err(ReportError::Misaligned { acts: job.acts.len(), results: act_results.len() });
    }
    let finished = env.finished.max(env.started);
    let error_count = act_results
        .iter()
        .filter_map(ActResult::as_tool)
        .filter(|t| t.standard.prevented)
        .count() as u64;
    Ok(Report {
        job,
        act_results,
        job_data: JobData {
            start_time: format_timestamp(env.started),
            end_time: format_timestamp(finished),
            elapsed_seconds: elapsed_seconds(env.started, finished),
            agent: env.agent.clone(),
            error_count,
        },
    })
}

/// Scores print with at most two decimals and no trailing zeros.
pub fn format_score(value: f64) -> String {
    let text = format!("{value:.2}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" { "0".to_string() } else { text.to_string() }
}

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

const STYLE: &str = "body{font-family:system-ui,-apple-system,Segoe UI,Arial,sans-serif;margin:0;color:#1a1a1a;background:#fafafa}\
main{max-width:1100px;margin:0 auto;padding:24px}\
h1{font-size:1.6rem}h2{font-size:1.25rem;margin-top:2rem}h3{font-size:1.05rem}\
table{border-collapse:collapse;width:100%;background:#fff}\
th,td{border:1px solid #c8c8c8;padding:6px 8px;text-align:left;vertical-align:top}\
th{background:#ececec}\
code{font-family:Consolas,Menlo,monospace;font-size:.85rem;white-space:pre-wrap;word-break:break-all}\
.total{font-size:2rem;font-weight:700}.note{color:#4a4a4a}.prevented{color:#8a1111}";

fn page_start(out: &mut String, title: &str) {
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    out.push_str("<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n");
    let _ = writeln!(out, "<title>{}</title>", escape_html(title));
    let _ = writeln!(out, "<style>{STYLE}</style>\n</head>\n<body>\n<main>");
}

fn page_end(out: &mut String) {
    out.push_str("</main>\n</body>\n</html>\n");
}

fn url_cell(url: &str) -> String {
    if url.starts_with("http://") || url.starts_with("https://") {
        format!("<a href=\"{0}\">{0}</a>", escape_html(url))
    } else {
        escape_html(url)
    }
}

/// Single-file HTML summary of a report: total score, one row per issue
/// group, and every instance of every tool in an appendix.
pub fn digest_html(report: &Report, catalog: &IssueCatalog) -> String {
    let groups = gather(report, catalog);
    let score = score_groups(&groups, catalog);
    let job = &report.job;
    let mut out = String::new();
    page_start(&mut out, &format!("Accessibility digest: {}", job.id));

    let _ = writeln!(out, "<h1>Accessibility digest: {}</h1>", escape_html(&job.id));
    out.push_str("<h2>Summary</h2>\n<table>\n<tbody>\n");
    let rows = [
        ("Job", escape_html(&job.what)),
        ("Target", format!("{} {}", escape_html(&job.target.what), url_cell(&job.target.url))),
        ("Tested", format!("{} to {}", escape_html(&report.job_data.start_time), escape_html(&report.job_data.end_time))),
        ("Agent", escape_html(&report.job_data.agent)),
        ("Tools prevented", report.job_data.error_count.to_string()),
        ("Catalog", escape_html(&score.parameters.catalog_version)),
    ];
    for (label, value) in rows {
        let _ = writeln!(out, "<tr><th scope=\"row\">{label}</th><td>{value}</td></tr>");
    }
    out.push_str("</tbody>\n</table>\n");
    let _ = writeln!(
        out,
        "<p>Total score: <span class=\"total\" data-score=\"{0}\">{0}</span></p>",
        format_score(score.total)
    );
    out.push_str("<p class=\"note\">Higher scores mean more, or more serious, issues. \
                  Each issue scores weight × (1 + highest severity) × log2(1 + largest per-tool count).</p>\n");

    out.push_str("<h2 id=\"issues\">Issues</h2>\n<table class=\"issues\">\n<thead>\n<tr>");
    for heading in ["Issue", "WCAG", "Instances by tool", "Max count", "Max severity", "Distinct elements", "Score"] {
        let _ = write!(out, "<th scope=\"col\">{heading}</th>");
    }
    out.push_str("</tr>\n</thead>\n<tbody>\n");
    for group in &groups {
        let tools: Vec<String> = group
            .per_tool_counts
            .iter()
            .map(|(tool, count)| format!("{}: {count}", escape_html(tool)))
            .collect();
        let issue_label = match catalog.issue(&group.issue_id) {
            Some(entry) if !entry.what.is_empty() => {
                format!("{}<br>{}", escape_html(&group.issue_id), escape_html(&entry.what))
            }
            _ => escape_html(&group.issue_id),
        };
        let _ = writeln!(
            out,
            "<tr class=\"issue\"><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            issue_label,
            escape_html(&group.wcag),
            tools.join("<br>"),
            group.max_count,
            group.max_severity,
            group.clusters.len(),
            format_score(score.components[&group.issue_id]),
        );
    }
    out.push_str("</tbody>\n</table>\n");

    out.push_str("<h2 id=\"instances\">Instances by tool</h2>\n");
    for (index, result) in report.act_results.iter().enumerate() {
        let Some(tool) = result.as_tool() else { continue };
        let _ = writeln!(out, "<h3>{} (act {})</h3>", escape_html(&tool.tool_code), index + 1);
        if tool.standard.prevented {
            let _ = writeln!(
                out,
                "<p class=\"prevented\">Tool was prevented: {}</p>",
                escape_html(tool.error.as_deref().unwrap_or("no result"))
            );
            continue;
        }
        let t = tool.standard.totals;
        let _ = writeln!(
            out,
            "<p>Totals by severity 0 to 3: {}, {}, {}, {}{}</p>",
            t[0],
            t[1],
            t[2],
            t[3],
            if tool.standard.capped { " (itemization capped)" } else { "" }
        );
        if tool.standard.instances.is_empty() {
            out.push_str("<p>No instances reported.</p>\n");
            continue;
        }
        out.push_str("<table>\n<thead>\n<tr>");
        for heading in ["Rule", "Description", "Severity", "Count", "Element", "Location", "Excerpt"] {
            let _ = write!(out, "<th scope=\"col\">{heading}</th>");
        }
        out.push_str("</tr>\n</thead>\n<tbody>\n");
        for inst in &tool.standard.instances {
            let element = match (inst.tag_name.is_empty(), inst.id.is_empty()) {
                (true, _) => String::new(),
                (false, true) => escape_html(&inst.tag_name),
                (false, false) => format!("{} #{}", escape_html(&inst.tag_name), escape_html(&inst.id)),
            };
            let location = if inst.location.spec.is_empty() {
                String::new()
            } else {
                format!("{}: <code>{}</code>", serde_plain(&inst.location.loc_type), escape_html(&inst.location.spec))
            };
            let _ = writeln!(
                out,
                "<tr class=\"instance\"><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td><code>{}</code></td></tr>",
                escape_html(&inst.rule_id),
                escape_html(&inst.what),
                inst.ordinal_severity,
                inst.count,
                element,
                location,
                escape_html(&inst.excerpt),
            );
        }
        out.push_str("</tbody>\n</table>\n");
    }
    page_end(&mut out);
    out
}

fn serde_plain<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// One target's line in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub url: String,
    pub score: f64,
    #[serde(rename = "errorCount")]
    pub error_count: u64,
}

/// Comparative page: one row per target in ranking order.
pub fn compare_html(rankings: &[Ranked<ComparisonRow>]) -> Result<String, ReportError> {
    if rankings.is_empty() {
        return Err(ReportError::EmptyComparison);
    }
    let mut out = String::new();
    page_start(&mut out, "Accessibility score comparison");
    out.push_str("<h1>Accessibility score comparison</h1>\n");
    out.push_str("<p class=\"note\">Targets are ranked from lowest (best) to highest score.</p>\n");
    out.push_str("<table class=\"ranking\">\n<thead>\n<tr>");
    for heading in ["Rank", "Target", "URL", "Score", "Tools prevented"] {
        let _ = write!(out, "<th scope=\"col\">{heading}</th>");
    }
    out.push_str("</tr>\n</thead>\n<tbody>\n");
    for entry in rankings {
        let _ = writeln!(
            out,
            "<tr class=\"target\"><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            entry.rank,
            escape_html(&entry.target_id),
            url_cell(&entry.item.url),
            format_score(entry.item.score),
            entry.item.error_count,
        );
    }
    out.push_str("</tbody>\n</table>\n");
    page_end(&mut out);
    Ok(out)
}

/// CSV with header `target,url,score,errorCount`, RFC-4180 quoted.
pub fn export_scores(rankings: &[Ranked<ComparisonRow>]) -> String {
    let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    writer.write_record(["target", "url", "score", "errorCount"]).expect("writing to memory");
    for entry in rankings {
        writer
            .write_record([
                entry.target_id.as_str(),
                entry.item.url.as_str(),
                &format_score(entry.item.score),
                &entry.item.error_count.to_string(),
            ])
            .expect("writing to memory");
    }
    String::from_utf8(writer.into_inner().expect("flushing to memory")).expect("CSV of UTF-8 fields is UTF-8")
}
