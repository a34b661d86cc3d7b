//! Job server: a FIFO job queue for polling agents and a report store.

use std::collections::VecDeque;
use std::fs;
use std::io::{self, Read};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use ensemble_audit::model::{is_safe_id, job_from_value, Report};
use serde_json::{json, Value};
use tiny_http::{Header, Method, Request, Response, Server};

/// Largest request body accepted.
pub const MAX_BODY_BYTES: u64 = 32 * 1024 * 1024;
const WORKERS: usize = 4;
const RECV_TICK: Duration = Duration::from_millis(50);

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot use data directory {0}: {1}")]
    DataDir(PathBuf, io::Error),
    #[error("cannot listen: {0}")]
    Bind(String),
}

struct QueuedJob {
    id: String,
    body: String,
}

struct State {
    queue: Mutex<VecDeque<QueuedJob>>,
    data_dir: PathBuf,
}

/// A running server; dropping it without [`ServerHandle::shutdown`] leaves
/// the worker threads running.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        for w in self.workers {
            let _ = w.join();
        }
    }

    /// Blocks until the server stops.
    pub fn wait(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }
}

/// Starts serving on `host:port` (port 0 picks a free one). Reports already
/// in `data_dir` are served as if they had just been posted.
pub fn serve(host: &str, port: u16, data_dir: &Path) -> Result<ServerHandle, ServeError> {
    fs::create_dir_all(data_dir).map_err(|e| ServeError::DataDir(data_dir.to_path_buf(), e))?;
    let server = Server::http((host, port)).map_err(|e| ServeError::Bind(e.to_string()))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| ServeError::Bind("not an IP listener".into()))?;
    let server = Arc::new(server);
    let state = Arc::new(State { queue: Mutex::new(VecDeque::new()), data_dir: data_dir.to_path_buf() });
    let stop = Arc::new(AtomicBool::new(false));
    let workers = (0..WORKERS)
        .map(|_| {
            let (server, state, stop) = (Arc::clone(&server), Arc::clone(&state), Arc::clone(&stop));
            thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match server.recv_timeout(RECV_TICK) {
                        Ok(Some(request)) => handle(&state, request),
                        Ok(None) => {}
                        Err(e) => log::warn!("receive failed: {e}"),
                    }
                }
            })
        })
        .collect();
    log::info!("serving on http://{addr}, data in {}", data_dir.display());
    Ok(ServerHandle { addr, stop, workers })
}

struct Reply {
    status: u16,
    body: String,
}

impl Reply {
    fn json(status: u16, value: Value) -> Self {
        Reply { status, body: value.to_string() }
    }

    fn raw(status: u16, body: String) -> Self {
        Reply { status, body }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Reply::json(status, json!({ "error": message.into() }))
    }
}

fn handle(state: &State, mut request: Request) {
    let reply = route(state, &mut request);
    let mut response = Response::from_string(reply.body).with_status_code(reply.status);
    if reply.status != 204 {
        let header = Header::from_bytes("Content-Type", "application/json").expect("valid header");
        response = response.with_header(header);
    }
    if let Err(e) = request.respond(response) {
        log::warn!("cannot respond: {e}");
    }
}

fn read_body(request: &mut Request) -> Result<String, Reply> {
    let mut body = String::new();
    request
        .as_reader()
        .take(MAX_BODY_BYTES + 1)
        .read_to_string(&mut body)
        .map_err(|e| Reply::error(400, format!("unreadable body: {e}")))?;
    if body.len() as u64 > MAX_BODY_BYTES {
        return Err(Reply::error(413, "body too large"));
    }
    Ok(body)
}

fn route(state: &State, request: &mut Request) -> Reply {
    let url = request.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    match (request.method(), path) {
        (Method::Post, "/api/jobs") => match read_body(request) {
            Ok(body) => enqueue(state, body),
            Err(reply) => reply,
        },
        (Method::Get, "/api/job") => dequeue(state, query),
        (Method::Post, "/api/reports") => match read_body(request) {
            Ok(body) => store_report(state, &body),
            Err(reply) => reply,
        },
        (Method::Get, "/api/reports") => list_reports(state),
        (Method::Get, p) if p.starts_with("/api/reports/") => fetch_report(state, &p["/api/reports/".len()..]),
        (_, "/api/jobs" | "/api/job" | "/api/reports") => Reply::error(405, "method not allowed"),
        _ => Reply::error(404, "not found"),
    }
}

fn enqueue(state: &State, body: String) -> Reply {
    let value: Value = match serde_json::from_str(&body) {
        Ok(v) => v,
        Err(e) => return Reply::error(400, format!("malformed JSON: {e}")),
    };
    match job_from_value(value) {
        Ok(job) => {
            let id = job.id.clone();
            state.queue.lock().expect("queue lock").push_back(QueuedJob { id: id.clone(), body });
            log::info!("queued job {id}");
            Reply::json(201, json!({ "id": id }))
        }
        Err(errors) => {
            let messages: Vec<String> = errors.iter().map(ToString::to_string).collect();
            Reply::error(400, messages.join("; "))
        }
    }
}

fn dequeue(state: &State, query: &str) -> Reply {
    let agent = url::form_urlencoded::parse(query.as_bytes())
        .find(|(k, _)| k == "agent")
        .map(|(_, v)| v.into_owned())
        .unwrap_or_default();
    let next = state.queue.lock().expect("queue lock").pop_front();
    match next {
        Some(job) => {
            log::info!("job {} assigned to agent {agent:?}", job.id);
            Reply::raw(200, job.body)
        }
        None => Reply::raw(204, String::new()),
    }
}

fn report_path(state: &State, id: &str) -> PathBuf {
    state.data_dir.join(format!("{id}.json"))
}

fn store_report(state: &State, body: &str) -> Reply {
    let report: Report = match serde_json::from_str(body) {
        Ok(r) => r,
        Err(e) => return Reply::error(400, format!("malformed report: {e}")),
    };
    if !is_safe_id(&report.job.id) {
        return Reply::error(400, format!("unusable job id {:?}", report.job.id));
    }
    if let Err(e) = report.check() {
        return Reply::error(400, e.to_string());
    }
    // Write then rename so readers never see a partial file.
    let path = report_path(state, &report.job.id);
    let tmp = path.with_extension("json.part");
    let written = fs::write(&tmp, body).and_then(|_| fs::rename(&tmp, &path));
    match written {
        Ok(()) => {
            log::info!("stored report {}", report.job.id);
            Reply::json(201, json!({ "id": report.job.id }))
        }
        Err(e) => Reply::error(500, format!("cannot store report: {e}")),
    }
}

fn fetch_report(state: &State, id: &str) -> Reply {
    if !is_safe_id(id) {
        return Reply::error(404, "no such report");
    }
    match fs::read_to_string(report_path(state, id)) {
        Ok(body) => Reply::raw(200, body),
        Err(_) => Reply::error(404, "no such report"),
    }
}

fn list_reports(state: &State) -> Reply {
    let entries = match fs::read_dir(&state.data_dir) {
        Ok(entries) => entries,
        Err(e) => return Reply::error(500, e.to_string()),
    };
    let mut ids: Vec<String> = entries
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|name| name.strip_suffix(".json").map(str::to_string))
        .filter(|id| is_safe_id(id))
        .collect();
    ids.sort();
    Reply::json(200, json!(ids))
}
