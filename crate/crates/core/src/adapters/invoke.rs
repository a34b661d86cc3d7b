use std::io::Read;
use std::process::{Command, Stdio};
use std::thread;
use std::time::Duration;

use chrono::Utc;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use wait_timeout::ChildExt;

use super::{ToolKind, ToolSpec};
use crate::model::{format_timestamp, Act};

/// Raw output of one tool run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NativeReport {
    #[serde(rename = "toolCode")]
    pub tool_code: String,
    pub payload: Value,
    #[serde(rename = "fetchedAt")]
    pub fetched_at: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvokeError {
    #[error("timeout")]
    Timeout,
    #[error("builtin tools are not invoked externally")]
    Builtin,
    #[error("bad command template: {0}")]
    Template(String),
    #[error("cannot start tool: {0}")]
    Spawn(String),
    #[error("tool exited with status {code}: {stderr}")]
    Exit { code: i32, stderr: String },
    #[error("tool output is not JSON: {0}")]
    NotJson(String),
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("HTTP status {0}")]
    Http(u16),
}

/// Runs an external tool against a page and captures its JSON output.
///
/// Subprocess tools get `{url}` substituted into their command and the
/// browser name in `TARGET_BROWSER`; remote tools are fetched with
/// `GET <endpoint>?url=<target>`.
pub fn invoke_tool(
    spec: &ToolSpec,
    target_url: &str,
    act: &Act,
    browser: Option<&str>,
) -> Result<NativeReport, InvokeError> {
    let payload = match spec.kind {
        ToolKind::Builtin => return Err(InvokeError::Builtin),
        ToolKind::Subprocess => run_subprocess(spec, target_url, act, browser)?,
        ToolKind::Remote => fetch_remote(spec, target_url, act)?,
    };
    Ok(NativeReport {
        tool_code: spec.code.clone(),
        payload,
        fetched_at: format_timestamp(Utc::now()),
    })
}

fn parse_output(text: &str) -> Result<Value, InvokeError> {
    serde_json::from_str(text.trim()).map_err(|e| InvokeError::NotJson(e.to_string()))
}

fn forwarded_rules(spec: &ToolSpec, act: &Act) -> Option<String> {
    spec.rules_param.as_ref()?;
    act.rules.as_ref().map(|rules| rules.join(","))
}

fn command_args(spec: &ToolSpec, target_url: &str, act: &Act) -> Result<Vec<String>, InvokeError> {
    let template = spec.command_template.as_deref().unwrap_or("");
    let words = shlex::split(template).ok_or_else(|| InvokeError::Template(template.to_string()))?;
    let dir = spec.base_dir.to_string_lossy();
    let mut args: Vec<String> = words
        .into_iter()
        .map(|w| w.replace("{dir}", &dir).replace("{url}", target_url))
        .collect();
    if args.is_empty() {
        return Err(InvokeError::Template(template.to_string()));
    }
    if let (Some(flag), Some(rules)) = (&spec.rules_param, forwarded_rules(spec, act)) {
        args.push(flag.clone());
        args.push(rules);
    }
    Ok(args)
}

fn run_subprocess(spec: &ToolSpec, target_url: &str, act: &Act, browser: Option<&str>) -> Result<Value, InvokeError> {
    let args = command_args(spec, target_url, act)?;
    let mut command = Command::new(&args[0]);
    command
        .args(&args[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    if let Some(browser) = browser {
        command.env("TARGET_BROWSER", browser);
    }
    let mut child = command.spawn().map_err(|e| InvokeError::Spawn(format!("{}: {e}", args[0])))?;

    // Drain both pipes off-thread so a chatty tool cannot block on a full pipe.
    let mut stdout = child.stdout.take().expect("stdout is piped");
    let mut stderr = child.stderr.take().expect("stderr is piped");
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        buf
    });

    let status = match child.wait_timeout(Duration::from_secs(spec.timeout_seconds)) {
        Ok(Some(status)) => status,
        Ok(None) => {
            let _ = child.kill();
            let _ = child.wait();
            // Readers are left to finish on their own: grandchildren may
            // still hold the pipes open.
            return Err(InvokeError::Timeout);
        }
        Err(e) => return Err(InvokeError::Spawn(e.to_string())),
    };
    let out = out_reader.join().unwrap_or_default();
    let err = err_reader.join().unwrap_or_default();
    if !status.success() {
        return Err(InvokeError::Exit {
            code: status.code().unwrap_or(-1),
            stderr: String::from_utf8_lossy(&err).trim().to_string(),
        });
    }
    parse_output(&String::from_utf8_lossy(&out))
}

fn fetch_remote(spec: &ToolSpec, target_url: &str, act: &Act) -> Result<Value, InvokeError> {
    let template = spec.endpoint_template.as_deref().unwrap_or("");
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(spec.timeout_seconds)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut request = if template.contains("{url}") {
        let encoded: String = url::form_urlencoded::byte_serialize(target_url.as_bytes()).collect();
        agent.get(template.replace("{url}", &encoded))
    } else {
        agent.get(template).query("url", target_url)
    };
    if let Some(rules) = forwarded_rules(spec, act) {
        request = request.query("rules", rules);
    }
    let mut response = request.call().map_err(|e| match e {
        ureq::Error::Timeout(_) => InvokeError::Timeout,
        other => InvokeError::Connection(other.to_string()),
    })?;
    let status = response.status().as_u16();
    if status >= 400 {
        return Err(InvokeError::Http(status));
    }
    let body = response.body_mut().read_to_string().map_err(|e| match e {
        ureq::Error::Timeout(_) => InvokeError::Timeout,
        other => InvokeError::Connection(other.to_string()),
    })?;
    parse_output(&body)
}
