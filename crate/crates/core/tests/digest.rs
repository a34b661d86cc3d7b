mod common;

use ensemble_audit::adapters::ToolRegistry;
use ensemble_audit::dom::parse_html;
use ensemble_audit::ensemble::IssueCatalog;
use ensemble_audit::model::ActResult;
use ensemble_audit::reporting::{compare_html, digest_html, export_scores, ComparisonRow};
use ensemble_audit::rules::RuleRegistry;
use ensemble_audit::runner::{run_job, RunContext, SystemClock};
use ensemble_audit::scoring::{rank_by, score_report};

use common::{fixture_job, fixture_job_names};

fn run(name: &str) -> ensemble_audit::model::Report {
    let clock = SystemClock;
    run_job(&fixture_job(name), &ToolRegistry::default_config(), &RunContext::new("digest-test", &clock)).unwrap()
}

#[test]
fn digests_pass_the_builtin_rules() {
    let catalog = IssueCatalog::starter();
    let rules = RuleRegistry::starter();
    for name in fixture_job_names() {
        let html = digest_html(&run(&name), &catalog);
        let found = rules.run(&parse_html(&html).unwrap(), None).unwrap();
        assert!(found.instances.is_empty(), "{name}: {:#?}", found.instances);
    }
}

#[test]
fn hostile_excerpts_are_escaped() {
    let mut report = run("bad-all");
    for result in &mut report.act_results {
        if let ActResult::Tool(tool) = result {
            for inst in &mut tool.standard.instances {
                inst.excerpt = "<script>alert(1)</script>".into();
                inst.what = "\"><img src=x onerror=alert(2)>".into();
            }
        }
    }
    let html = digest_html(&report, &IssueCatalog::starter());
    assert!(!html.contains("<script>"));
    assert!(!html.contains("<img src=x"));
    assert!(html.contains("&lt;script&gt;alert(1)&lt;/script&gt;"));
    let doc = parse_html(&html).unwrap();
    assert_eq!(doc.elements_named("SCRIPT").count(), 0);
    assert_eq!(doc.elements_named("IMG").count(), 0);
}

#[test]
fn comparison_and_csv_agree() {
    let catalog = IssueCatalog::starter();
    let rows: Vec<(String, ComparisonRow)> = ["bad-all", "clean-all", "forms-native"]
        .iter()
        .map(|name| {
            let report = run(name);
            let row = ComparisonRow {
                url: report.job.target.url.clone(),
                score: score_report(&report, &catalog).total,
                error_count: report.job_data.error_count,
            };
            (name.to_string(), row)
        })
        .collect();
    let ranked = rank_by(rows, |r| r.score).unwrap();
    assert_eq!(ranked[0].target_id, "clean-all");
    let html = compare_html(&ranked).unwrap();
    assert_eq!(html.matches("<tr class=\"target\"").count(), 3);
    let csv = export_scores(&ranked);
    let lines: Vec<&str> = csv.split("\r\n").filter(|l| !l.is_empty()).collect();
    assert_eq!(lines[0], "target,url,score,errorCount");
    assert!(lines[1].starts_with("clean-all,"));
    assert_eq!(lines.len(), 4);
    let found = RuleRegistry::starter().run(&parse_html(&html).unwrap(), None).unwrap();
    assert!(found.instances.is_empty(), "{:#?}", found.instances);
}
