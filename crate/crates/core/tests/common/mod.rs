#![allow(dead_code)]

use std::fs;
use std::path::PathBuf;

use ensemble_audit::model::{parse_job, Job};

/// Prefix the fixture jobs use for their local pages.
pub const FIXTURE_URL_PREFIX: &str = "file:///fixtures/";

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

pub fn fixture_url(relative: &str) -> String {
    url::Url::from_file_path(fixtures_dir().join(relative)).unwrap().to_string()
}

/// Loads a fixture job with its page URLs pointing into this checkout.
pub fn fixture_job(name: &str) -> Job {
    let text = fs::read_to_string(fixtures_dir().join("jobs").join(format!("{name}.json"))).unwrap();
    let base = url::Url::from_directory_path(fixtures_dir()).unwrap().to_string();
    parse_job(&text.replace(FIXTURE_URL_PREFIX, &base)).unwrap()
}

pub fn fixture_job_names() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixtures_dir().join("jobs"))
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix(".json").map(str::to_string))
        .collect();
    names.sort();
    names
}
