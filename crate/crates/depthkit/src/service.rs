//! HTTP annotation service.
//!
//! All writes go through one mutex-guarded [`Ledger`]; every event it emits
//! is appended to `events.jsonl` before the response is sent, and readers see
//! the latest published [`LedgerState`] without taking the write lock.
//!
//! Endpoints:
//!
//! | method | path                    | body / query                          |
//! |--------|-------------------------|---------------------------------------|
//! | POST   | `/api/register`         | `{"annotator"}`                       |
//! | GET    | `/api/next`             | `?annotator=ID`                       |
//! | POST   | `/api/submit`           | `{"annotator", "pair_id", "decision"}`|
//! | GET    | `/api/progress`         |                                       |
//! | GET    | `/api/pair/{id}/image`  |                                       |
//!
//! Errors are JSON objects `{"code", "message"}`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use depthkit_core::annotation::{AnnotationError, Decision, Event, Ledger, LedgerState, PairStatus, Role};
use depthkit_core::benchmark::PointPair;
use serde::{Deserialize, Serialize};
use tokio::sync::watch;

use crate::manifest::write_atomic;
use crate::{Error, Result};

/// Milliseconds since some fixed origin.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

const LOG_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

/// Append-only event log with periodic state snapshots.
pub struct Store {
    dir: PathBuf,
    log: File,
    snapshot_every: u64,
    since_snapshot: u64,
}

impl Store {
    /// Opens `dir`, restoring state from the snapshot plus the log tail.
    /// A final line cut off mid-write is dropped from the log.
    pub fn open(dir: &Path, snapshot_every: u64) -> Result<(Store, LedgerState)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let log_path = dir.join(LOG_FILE);
        let snap_path = dir.join(SNAPSHOT_FILE);
        let mut state = match std::fs::read_to_string(&snap_path) {
            Ok(text) => serde_json::from_str::<LedgerState>(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", snap_path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => LedgerState::default(),
            Err(e) => return Err(Error::io(snap_path, e)),
        };
        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)
            .map_err(|e| Error::io(&log_path, e))?;
        let skip = state.events_applied;
        let mut seen = 0u64;
        let mut good_len = 0u64;
        {
            let mut reader = BufReader::new(&mut log);
            reader.seek(SeekFrom::Start(0)).map_err(|e| Error::io(&log_path, e))?;
            let mut line = String::new();
            loop {
                line.clear();
                let n = reader.read_line(&mut line).map_err(|e| Error::io(&log_path, e))?;
                if n == 0 {
                    break;
                }
                if !line.ends_with('\n') {
                    log::warn!("{}: dropping torn final line", log_path.display());
                    break;
                }
                good_len += n as u64;
                if line.trim().is_empty() {
                    continue;
                }
                seen += 1;
                if seen <= skip {
                    continue;
                }
                let event: Event = serde_json::from_str(&line)
                    .map_err(|e| Error::Data(format!("{}: event {seen}: {e}", log_path.display())))?;
                state.apply(&event)?;
            }
        }
        if seen < skip {
            return Err(Error::Data(format!(
                "{}: snapshot covers {skip} events but the log holds {seen}",
                snap_path.display()
            )));
        }
        log.set_len(good_len).map_err(|e| Error::io(&log_path, e))?;
        Ok((
            Store {
                dir: dir.to_path_buf(),
                log,
                snapshot_every: snapshot_every.max(1),
                since_snapshot: seen - skip,
            },
            state,
        ))
    }

    /// Appends `events` and snapshots `state` when due.
    pub fn append(&mut self, events: &[Event], state: &LedgerState) -> Result<()> {
        if events.is_empty() {
            return Ok(());
        }
        let path = self.dir.join(LOG_FILE);
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).expect("serializable"));
            buf.push('\n');
        }
        self.log.write_all(buf.as_bytes()).map_err(|e| Error::io(&path, e))?;
        self.log.flush().map_err(|e| Error::io(&path, e))?;
        self.since_snapshot += events.len() as u64;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot(state)?;
        }
        Ok(())
    }

    pub fn snapshot(&mut self, state: &LedgerState) -> Result<()> {
        self.log
            .sync_data()
            .map_err(|e| Error::io(self.dir.join(LOG_FILE), e))?;
        let path = self.dir.join(SNAPSHOT_FILE);
        let text = serde_json::to_string(state).expect("serializable");
        write_atomic(&path, text.as_bytes()).map_err(|e| Error::io(path, e))?;
        self.since_snapshot = 0;
        Ok(())
    }
}

/// Reads every event in a log file.
pub fn read_log(path: &Path) -> Result<Vec<Event>> {
    crate::manifest::read_jsonl(path).map_err(Into::into)
}

struct Writer {
    ledger: Ledger,
    store: Option<Store>,
}

pub struct Service {
    writer: Mutex<Writer>,
    published: watch::Sender<Arc<LedgerState>>,
    images: HashMap<String, PathBuf>,
    clock: Clock,
}

impl Service {
    /// In-memory service with no persistence.
    pub fn in_memory(lease_ms: u64, clock: Clock) -> Self {
        Self::from_parts(Ledger::new(lease_ms), None, clock)
    }

    /// Service backed by a state directory, restored on open.
    pub fn open(dir: &Path, lease_ms: u64, snapshot_every: u64, clock: Clock) -> Result<Self> {
        let (store, state) = Store::open(dir, snapshot_every)?;
        Ok(Self::from_parts(
            Ledger::from_state(state, lease_ms),
            Some(store),
            clock,
        ))
    }

    fn from_parts(ledger: Ledger, store: Option<Store>, clock: Clock) -> Self {
        let (published, _) = watch::channel(Arc::new(ledger.state().clone()));
        Self {
            writer: Mutex::new(Writer { ledger, store }),
            published,
            images: HashMap::new(),
            clock,
        }
    }

    /// Image files served by `/api/pair/{id}/image`, keyed by image id.
    pub fn with_images(mut self, images: HashMap<String, PathBuf>) -> Self {
        self.images = images;
        self
    }

    pub fn now(&self) -> u64 {
        (self.clock)()
    }

    /// Runs one command against the ledger, persists what it emitted and
    /// publishes the new state.
    fn command<T>(&self, f: impl FnOnce(&mut Ledger) -> Result<T, AnnotationError>) -> Result<T> {
        let mut w = self
            .writer
            .lock()
            .map_err(|_| Error::Internal("ledger lock poisoned".into()))?;
        let out = f(&mut w.ledger);
        let events = w.ledger.drain_events();
        if !events.is_empty() {
            let Writer { ledger, store } = &mut *w;
            if let Some(store) = store {
                store.append(&events, ledger.state())?;
            }
            self.published.send_replace(Arc::new(w.ledger.state().clone()));
        }
        Ok(out?)
    }

    pub fn register(&self, annotator: &str) -> Result<()> {
        self.command(|l| l.register(annotator))
    }

    /// Enqueues pairs not already known; returns how many were added.
    pub fn enqueue_new(&self, pairs: Vec<PointPair>) -> Result<usize> {
        self.command(|l| {
            let mut added = 0;
            for p in pairs {
                if l.state().entry(&p.pair_id).is_none() {
                    l.enqueue(p)?;
                    added += 1;
                }
            }
            Ok(added)
        })
    }

    pub fn claim_next(&self, annotator: &str) -> Result<Option<depthkit_core::annotation::Assignment>> {
        let now = self.now();
        self.command(|l| l.claim_next(annotator, now))
    }

    pub fn submit(&self, annotator: &str, pair_id: &str, decision: Decision) -> Result<PairStatus> {
        let now = self.now();
        self.command(|l| l.submit(annotator, pair_id, decision, now))
    }

    pub fn tick(&self) -> Result<usize> {
        let now = self.now();
        self.command(|l| l.tick(now))
    }

    /// Latest published state.
    pub fn snapshot(&self) -> Arc<LedgerState> {
        self.published.borrow().clone()
    }

    /// Forces a snapshot to disk, e.g. on shutdown.
    pub fn flush(&self) -> Result<()> {
        let mut w = self
            .writer
            .lock()
            .map_err(|_| Error::Internal("ledger lock poisoned".into()))?;
        let Writer { ledger, store } = &mut *w;
        if let Some(store) = store {
            store.snapshot(ledger.state())?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}

fn api_error(status: StatusCode, code: &str, message: impl Into<String>) -> Response {
    (
        status,
        Json(ApiError {
            code: code.into(),
            message: message.into(),
        }),
    )
        .into_response()
}

fn error_response(e: Error) -> Response {
    match e {
        Error::Annotation(a) => {
            let status = match a {
                AnnotationError::UnknownAnnotator(_) => StatusCode::FORBIDDEN,
                AnnotationError::UnknownPair(_) => StatusCode::NOT_FOUND,
                AnnotationError::LeaseExpired { .. }
                | AnnotationError::DuplicateSubmission { .. }
                | AnnotationError::DuplicatePair(_) => StatusCode::CONFLICT,
                AnnotationError::CorruptLog { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            };
            api_error(status, a.code(), a.to_string())
        }
        other => api_error(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
    }
}

#[derive(Debug, Deserialize)]
struct AnnotatorQuery {
    annotator: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegisterBody {
    annotator: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    annotator: String,
    pair_id: String,
    decision: Decision,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum NextResponse {
    Assigned {
        pair: PointPair,
        role: Role,
        lease_expiry: u64,
    },
    NoneAvailable,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SubmitResponse {
    pub pair_id: String,
    pub state: PairStatus,
}

fn bad_request(message: String) -> Response {
    api_error(StatusCode::BAD_REQUEST, "bad_request", message)
}

async fn register(State(svc): State<Arc<Service>>, body: Result<Json<RegisterBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    if body.annotator.trim().is_empty() {
        return bad_request("annotator must not be empty".into());
    }
    match svc.register(&body.annotator) {
        Ok(()) => Json(serde_json::json!({ "annotator": body.annotator })).into_response(),
        Err(e) => error_response(e),
    }
}

async fn next(State(svc): State<Arc<Service>>, q: Result<Query<AnnotatorQuery>, QueryRejection>) -> Response {
    let Query(q) = match q {
        Ok(q) => q,
        Err(e) => return bad_request(e.body_text()),
    };
    match svc.claim_next(&q.annotator) {
        Ok(Some(a)) => Json(NextResponse::Assigned {
            pair: a.pair,
            role: a.role,
            lease_expiry: a.lease_expiry,
        })
        .into_response(),
        Ok(None) => Json(NextResponse::NoneAvailable).into_response(),
        Err(e) => error_response(e),
    }
}

async fn submit(State(svc): State<Arc<Service>>, body: Result<Json<SubmitBody>, JsonRejection>) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return bad_request(e.body_text()),
    };
    match svc.submit(&body.annotator, &body.pair_id, body.decision) {
        Ok(state) => Json(SubmitResponse {
            pair_id: body.pair_id,
            state,
        })
        .into_response(),
        Err(e) => error_response(e),
    }
}

async fn progress(State(svc): State<Arc<Service>>) -> Response {
    Json(svc.snapshot().progress()).into_response()
}

async fn pair_image(State(svc): State<Arc<Service>>, UrlPath(id): UrlPath<String>) -> Response {
    let state = svc.snapshot();
    let Some(entry) = state.entry(&id) else {
        return error_response(Error::Annotation(AnnotationError::UnknownPair(id)));
    };
    let pair = &entry.pair;
    let Some(path) = svc.images.get(&pair.image_id) else {
        return api_error(
            StatusCode::NOT_FOUND,
            "image_unavailable",
            format!("no image registered for {}", pair.image_id),
        );
    };
    let bytes = match tokio::fs::read(path).await {
        Ok(b) => b,
        Err(e) => {
            return api_error(
                StatusCode::NOT_FOUND,
                "image_unavailable",
                format!("{}: {e}", path.display()),
            )
        }
    };
    let content_type = match path.extension().and_then(|e| e.to_str()) {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        _ => "image/png",
    };
    let hv = |s: String| HeaderValue::from_str(&s).unwrap_or_else(|_| HeaderValue::from_static("invalid"));
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static(content_type)),
            (header::HeaderName::from_static("x-pair-id"), hv(pair.pair_id.clone())),
            (header::HeaderName::from_static("x-image-id"), hv(pair.image_id.clone())),
            (
                header::HeaderName::from_static("x-p1"),
                hv(format!("{},{}", pair.p1.x, pair.p1.y)),
            ),
            (
                header::HeaderName::from_static("x-p2"),
                hv(format!("{},{}", pair.p2.x, pair.p2.y)),
            ),
        ],
        bytes,
    )
        .into_response()
}

async fn not_found() -> Response {
    api_error(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/api/register", post(register))
        .route("/api/next", get(next))
        .route("/api/submit", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/pair/:id/image", get(pair_image))
        .fallback(not_found)
        .with_state(svc)
}

/// Serves until `shutdown` resolves, expiring stale leases once a second.
pub async fn serve(
    svc: Arc<Service>,
    listener: tokio::net::TcpListener,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let ticker = {
        let svc = svc.clone();
        tokio::spawn(async move {
            let mut every = tokio::time::interval(std::time::Duration::from_secs(1));
            loop {
                every.tick().await;
                if let Err(e) = svc.tick() {
                    log::error!("lease expiry failed: {e}");
                }
            }
        })
    };
    let result = axum::serve(listener, router(svc.clone()))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::Internal(format!("server: {e}")));
    ticker.abort();
    svc.flush()?;
    result
}
