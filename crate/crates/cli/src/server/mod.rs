//! Local HTTP service over one frame sequence and its annotation store.
//!
//! The session is the single writer of the store: every mutation takes the
//! session lock, checks the layer revision (`If-Match`) and bumps it. Long
//! operations work on a snapshot outside the lock and commit only if the
//! layer revision is unchanged. Filtering runs as a polled job.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use axum::http::{header, HeaderValue, Method};
use axum::routing::{get, post, put};
use axum::Router;
use serde::Serialize;
use tower_http::cors::{AllowOrigin, CorsLayer};
use ustrack_core::annot::{AnnotError, SequenceBounds};
use ustrack_core::{AnnotationLayer, AnnotationStore, FilterConfig, FrameSequence};

mod api;
mod error;
mod openapi;

pub use error::ApiError;
pub use openapi::document as openapi_document;

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Default filter settings; `filter.rstc.track` also drives guesses and
    /// interpolation.
    pub filter: FilterConfig,
    /// Directory that `POST /api/save` writes layer files to.
    pub save_dir: PathBuf,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            filter: FilterConfig::default(),
            save_dir: PathBuf::from("."),
        }
    }
}

pub(crate) struct State {
    pub store: AnnotationStore,
    /// Layers changed since they were last saved or loaded.
    pub dirty: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

pub(crate) struct Job {
    pub layer: String,
    pub done: AtomicUsize,
    pub total: AtomicUsize,
    pub outcome: Mutex<(JobState, Option<String>)>,
}

pub struct Session {
    seq: FrameSequence,
    config: SessionConfig,
    state: Mutex<State>,
    jobs: Mutex<BTreeMap<u64, Arc<Job>>>,
    next_job: AtomicU64,
}

impl Session {
    pub fn new(seq: FrameSequence, layers: Vec<AnnotationLayer>, config: SessionConfig) -> Result<Self, AnnotError> {
        let mut store = AnnotationStore::new(SequenceBounds::of(&seq));
        for layer in layers {
            store.add_layer(layer)?;
        }
        Ok(Self {
            seq,
            config,
            state: Mutex::new(State {
                store,
                dirty: BTreeSet::new(),
            }),
            jobs: Mutex::new(BTreeMap::new()),
            next_job: AtomicU64::new(1),
        })
    }

    pub fn sequence(&self) -> &FrameSequence {
        &self.seq
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// Snapshot of one layer.
    pub fn layer(&self, name: &str) -> Result<AnnotationLayer, AnnotError> {
        self.lock().store.layer(name).cloned()
    }

    pub(crate) fn lock(&self) -> MutexGuard<'_, State> {
        // A panic while holding the lock cannot leave a half-applied edit:
        // the store restores layers on failed edits before returning.
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn add_job(&self, layer: String) -> (u64, Arc<Job>) {
        let id = self.next_job.fetch_add(1, Ordering::Relaxed);
        let job = Arc::new(Job {
            layer,
            done: AtomicUsize::new(0),
            total: AtomicUsize::new(0),
            outcome: Mutex::new((JobState::Running, None)),
        });
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).insert(id, job.clone());
        (id, job)
    }

    pub(crate) fn job(&self, id: u64) -> Option<Arc<Job>> {
        self.jobs.lock().unwrap_or_else(|e| e.into_inner()).get(&id).cloned()
    }
}

/// True for `http(s)://localhost`, `127.0.0.1` and `[::1]` origins, any port.
pub fn is_local_origin(origin: &str) -> bool {
    let Some(rest) = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://")) else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or(rest)
    } else {
        rest.split(':').next().unwrap_or(rest)
    };
    let port_ok = match rest[host.len()..].strip_prefix(':') {
        None => rest.len() == host.len(),
        Some(p) => !p.is_empty() && p.bytes().all(|b| b.is_ascii_digit()),
    };
    port_ok && matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

fn cors() -> CorsLayer {
    CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin: &HeaderValue, _| {
            origin.to_str().is_ok_and(is_local_origin)
        }))
        .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE, header::IF_MATCH])
}

pub fn router(session: Arc<Session>) -> Router {
    Router::new()
        .route("/", get(api::index))
        .route("/api/spec", get(api::spec))
        .route("/api/meta", get(api::meta))
        .route("/api/frame/{i}", get(api::frame))
        .route("/api/layers", get(api::list_layers).post(api::create_layer))
        .route("/api/layers/{layer}/labels", post(api::add_label))
        .route("/api/layers/{layer}/labels/{label}", get(api::get_label))
        .route(
            "/api/layers/{layer}/labels/{label}/frames/{frame}",
            put(api::put_point).delete(api::delete_point),
        )
        .route("/api/layers/{layer}/annotated-frames", get(api::annotated_frames))
        .route("/api/ops/guess", post(api::guess))
        .route("/api/ops/interpolate", post(api::interpolate))
        .route("/api/ops/trim", post(api::trim))
        .route("/api/ops/copy", post(api::copy))
        .route("/api/ops/filter", post(api::filter))
        .route("/api/jobs/{id}", get(api::job))
        .route("/api/save", post(api::save))
        .fallback(api::no_route)
        .layer(cors())
        .with_state(session)
}

/// Serves on `127.0.0.1:port` until Ctrl-C.
pub async fn serve(session: Arc<Session>, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).await?;
    eprintln!("serving on http://{}", listener.local_addr()?);
    axum::serve(listener, router(session))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
