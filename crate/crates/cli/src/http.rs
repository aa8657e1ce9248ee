//! The analysis service: a small HTTP front end over the pipeline.
//!
//! Endpoints:
//! - `POST /v1/analyze` — run the pipeline over the request's files,
//!   optionally restricted to a unified diff's changed lines.
//! - `POST /v1/feedback` — append one feedback event to the feedback log,
//!   acknowledged only after the write is durable.
//! - `GET /v1/health` — liveness plus the config fingerprint and backend
//!   identity, so operators can tell what a process is actually running.
//! - `POST /v1/reload` — re-read config files; on failure the old config
//!   stays in force.
//!
//! Config edits are also picked up automatically: each analyze request
//! compares file stamps and reloads when something changed. Config is an
//! immutable snapshot behind a lock, swapped whole — a request sees either
//! the old config or the new one, never a mix.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use anyhow::{Context, Result};
use precept_core::backend::{Backend, DecodeConfig, Strategy};
use precept_core::corpus::Language;
use precept_core::replay::{record_feedback, FeedbackEvent};
use precept_core::{PostedComment, StageStats};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::analysis::{analyze_files, FileInput, MultiFileOutcome};
use crate::config::{ConfigSources, LoadedConfig, SourceStamp};

const MAX_BODY_BYTES: u64 = 16 * 1024 * 1024;
const WORKERS: usize = 4;

pub struct ServeOptions {
    pub port: u16,
    pub feedback_log: PathBuf,
    pub backend: Box<dyn Backend>,
    pub sources: ConfigSources,
    /// Decode used when a request does not override the strategy.
    pub default_decode: DecodeConfig,
    /// Beam width applied when a request overrides the strategy to beam.
    pub override_beam_width: u32,
}

struct ConfigEpoch {
    loaded: Arc<LoadedConfig>,
    stamps: Vec<SourceStamp>,
}

struct ServerState {
    backend: Box<dyn Backend>,
    default_decode: DecodeConfig,
    override_beam_width: u32,
    sources: ConfigSources,
    config: RwLock<ConfigEpoch>,
    feedback: Mutex<File>,
}

#[derive(Deserialize)]
struct AnalyzeRequest {
    files: Vec<RequestFile>,
    #[serde(default)]
    diff: Option<String>,
    #[serde(default)]
    strategy_override: Option<Strategy>,
}

#[derive(Deserialize)]
struct RequestFile {
    path: String,
    language: String,
    content: String,
}

#[derive(Serialize)]
struct AnalyzeResponse {
    comments: Vec<PostedComment>,
    file_errors: Vec<crate::analysis::FileFailure>,
    stats: StageStats,
    elapsed_ms: f64,
}

/// Binds, announces the bound address on standard output, and serves until
/// the process is killed. Fails fast — before binding — if the config does
/// not load cleanly.
pub fn run_serve(opts: ServeOptions) -> Result<()> {
    let loaded = opts.sources.load().context("loading service config")?;
    let stamps = opts.sources.stamps();
    let feedback = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&opts.feedback_log)
        .with_context(|| format!("opening feedback log {}", opts.feedback_log.display()))?;

    let server = Server::http(("127.0.0.1", opts.port))
        .map_err(|err| anyhow::anyhow!("binding 127.0.0.1:{}: {err}", opts.port))?;
    let port = server
        .server_addr()
        .to_ip()
        .map(|addr| addr.port())
        .unwrap_or(opts.port);
    println!("listening on 127.0.0.1:{port}");
    std::io::stdout().flush().ok();

    let state = Arc::new(ServerState {
        backend: opts.backend,
        default_decode: opts.default_decode,
        override_beam_width: opts.override_beam_width,
        sources: opts.sources,
        config: RwLock::new(ConfigEpoch {
            loaded: Arc::new(loaded),
            stamps,
        }),
        feedback: Mutex::new(feedback),
    });

    let server = Arc::new(server);
    let mut workers = Vec::new();
    for _ in 0..WORKERS {
        let server = server.clone();
        let state = state.clone();
        workers.push(std::thread::spawn(move || loop {
            match server.recv() {
                Ok(request) => handle(request, &state),
                Err(_) => return,
            }
        }));
    }
    for worker in workers {
        let _ = worker.join();
    }
    Ok(())
}

fn handle(mut request: Request, state: &ServerState) {
    let path = request
        .url()
        .split('?')
        .next()
        .unwrap_or_default()
        .to_string();
    let (status, body) = match (request.method().clone(), path.as_str()) {
        (Method::Post, "/v1/analyze") => match read_body(&mut request) {
            Ok(body) => handle_analyze(state, &body),
            Err(response) => response,
        },
        (Method::Post, "/v1/feedback") => match read_body(&mut request) {
            Ok(body) => handle_feedback(state, &body),
            Err(response) => response,
        },
        (Method::Get, "/v1/health") => handle_health(state),
        (Method::Post, "/v1/reload") => handle_reload(state),
        _ => (404, json!({"error": "no such endpoint"})),
    };
    let response = Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(
            Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                .expect("static header is valid"),
        );
    // A client that hung up mid-response is its own problem.
    let _ = request.respond(response);
}

fn read_body(request: &mut Request) -> Result<String, (u16, serde_json::Value)> {
    if request
        .body_length()
        .is_some_and(|len| len as u64 > MAX_BODY_BYTES)
    {
        return Err((413, json!({"error": "request body too large"})));
    }
    let mut body = String::new();
    match request
        .as_reader()
        .take(MAX_BODY_BYTES + 1)
        .read_to_string(&mut body)
    {
        Ok(_) if body.len() as u64 > MAX_BODY_BYTES => {
            Err((413, json!({"error": "request body too large"})))
        }
        Ok(_) => Ok(body),
        Err(err) => Err((400, json!({"error": format!("reading body: {err}")}))),
    }
}

fn handle_analyze(state: &ServerState, body: &str) -> (u16, serde_json::Value) {
    let started = Instant::now();
    maybe_reload(state);

    let request: AnalyzeRequest = match serde_json::from_str(body) {
        Ok(req) => req,
        Err(err) => return (400, json!({"error": format!("bad request: {err}")})),
    };
    let decode = match request.strategy_override {
        None => state.default_decode,
        Some(Strategy::Greedy) => DecodeConfig::greedy(),
        Some(Strategy::Beam) => DecodeConfig::beam(state.override_beam_width),
    };
    let files: Vec<FileInput> = request
        .files
        .into_iter()
        .map(|f| FileInput {
            path: f.path,
            language: Language::new(f.language),
            content: f.content,
        })
        .collect();

    let loaded = state.config.read().expect("config lock").loaded.clone();
    let cfg = loaded.pipeline(decode);
    let outcome = match analyze_files(state.backend.as_ref(), &files, request.diff.as_deref(), &cfg)
    {
        Ok(outcome) => outcome,
        Err(err) => return (400, json!({"error": err.to_string()})),
    };

    let status = analyze_status(&outcome, files.len());
    let response = AnalyzeResponse {
        comments: outcome.comments,
        file_errors: outcome.failures,
        stats: outcome.stats,
        elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
    };
    (
        status,
        serde_json::to_value(response).expect("response serializes"),
    )
}

/// 200 while anything succeeded (or there was nothing to do); when every
/// file failed, the class of failure picks the code: the caller's fault is
/// 400, a backend fault is 502.
fn analyze_status(outcome: &MultiFileOutcome, file_count: usize) -> u16 {
    if !outcome.all_failed(file_count) {
        200
    } else if outcome.any_backend_failure() {
        502
    } else {
        400
    }
}

fn handle_feedback(state: &ServerState, body: &str) -> (u16, serde_json::Value) {
    let event: FeedbackEvent = match serde_json::from_str(body) {
        Ok(event) => event,
        Err(err) => return (400, json!({"error": format!("bad feedback event: {err}")})),
    };
    let mut file = state.feedback.lock().expect("feedback lock");
    let stored = record_feedback(&event, &mut *file).and_then(|()| file.sync_data());
    match stored {
        Ok(()) => (200, json!({"status": "recorded"})),
        // Not acknowledged: the caller must assume the event was lost.
        Err(err) => (500, json!({"error": format!("feedback not stored: {err}")})),
    }
}

fn handle_health(state: &ServerState) -> (u16, serde_json::Value) {
    let epoch = state.config.read().expect("config lock");
    (
        200,
        json!({
            "status": "ok",
            "backend": state.backend.identity(),
            "config_fingerprint": epoch.loaded.fingerprint,
        }),
    )
}

fn handle_reload(state: &ServerState) -> (u16, serde_json::Value) {
    match reload(state) {
        Ok(fingerprint) => (200, json!({"status": "reloaded", "config_fingerprint": fingerprint})),
        Err(err) => (
            500,
            json!({"error": format!("reload failed, previous config kept: {err:#}")}),
        ),
    }
}

/// Swaps in a freshly loaded config; on any error the current one stays.
fn reload(state: &ServerState) -> Result<String> {
    let stamps = state.sources.stamps();
    let loaded = state.sources.load()?;
    let fingerprint = loaded.fingerprint.clone();
    let mut epoch = state.config.write().expect("config lock");
    epoch.loaded = Arc::new(loaded);
    epoch.stamps = stamps;
    Ok(fingerprint)
}

/// Reloads when any config file's (mtime, length) changed since the last
/// load. A failed reload leaves the old config and stamps so the next
/// request retries.
fn maybe_reload(state: &ServerState) {
    let current = state.sources.stamps();
    {
        let epoch = state.config.read().expect("config lock");
        if epoch.stamps == current {
            return;
        }
    }
    if let Err(err) = reload(state) {
        eprintln!("config changed on disk but failed to reload; keeping previous config: {err:#}");
    }
}
