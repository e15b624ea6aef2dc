// SPDX-License-Identifier: Apache-2.0

//! HTTP facade over the learner for interactive refinement sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/registry` | registered datasets (with schemas) and target series |
//! | POST | `/api/sessions` | create a session |
//! | GET | `/api/sessions/{id}` | session state |
//! | POST | `/api/sessions/{id}/fit` | start a fit job; body = config fields to override |
//! | GET | `/api/jobs/{id}` | job state, trace so far, report when done |
//! | POST | `/api/sessions/{id}/evaluate` | body = DSL text; counts and scores |
//! | GET | `/api/sessions/{id}/series?which=target\|learned\|pinned:<name>` | labeled series |
//! | PUT | `/api/sessions/{id}/blacklist` | replace the blacklist |
//! | PUT/DELETE | `/api/sessions/{id}/pins/{name}` | pin or drop a named syndrome |
//!
//! Sessions are persisted to an append-only JSON-lines log when a store
//! path is configured, and restored on start-up.

mod error;
mod routes;
mod store;

use std::collections::BTreeMap;
use std::io;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock, RwLockWriteGuard};

use axum::http::HeaderValue;
use axum::Router;
use serde::Serialize;
use syndro_core::learner::FitReport;
use syndro_core::{
    count_series, parse_syndrome, BlacklistSpec, CountSeries, Dataset, Granularity, LearnerConfig,
    TargetSeries, TimeIndex, TraceEntry,
};
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use error::{ApiError, ApiResult};
pub use store::{Event, SessionStore};

/// Datasets and target series the service can open sessions on.
#[derive(Debug, Default)]
pub struct Registry {
    datasets: BTreeMap<String, Arc<Dataset>>,
    targets: BTreeMap<String, TargetSeries>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_dataset(&mut self, name: impl Into<String>, dataset: Dataset) -> &mut Self {
        self.datasets.insert(name.into(), Arc::new(dataset));
        self
    }

    pub fn add_targets(&mut self, name: impl Into<String>, targets: TargetSeries) -> &mut Self {
        self.targets.insert(name.into(), targets);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Session log; sessions are kept in memory only when `None`.
    pub store: Option<PathBuf>,
    /// Worker threads per fit; the global pool when `None`.
    pub threads: Option<usize>,
    /// Allowed CORS origin; any origin when `None`.
    pub cors_origin: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitJob {
    pub id: String,
    pub session: String,
    pub state: JobState,
    pub config: LearnerConfig,
    /// Conjunctions added so far.
    pub progress: usize,
    pub trace: Vec<TraceEntry>,
    pub result: Option<Arc<FitReport>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct Learned {
    job: String,
    syndrome: String,
    counts: CountSeries,
}

#[derive(Debug)]
pub(crate) struct Session {
    id: String,
    dataset_name: String,
    targets_name: String,
    dataset: Arc<Dataset>,
    targets: TargetSeries,
    index: Arc<TimeIndex>,
    blacklist: BlacklistSpec,
    pins: BTreeMap<String, String>,
    running: Option<String>,
    jobs: Vec<String>,
    learned: Option<Learned>,
}

impl Session {
    fn granularity(&self) -> Granularity {
        self.targets.granularity()
    }
}

pub(crate) struct Inner {
    registry: Registry,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    jobs: RwLock<BTreeMap<String, Arc<Mutex<FitJob>>>>,
    store: Option<Mutex<SessionStore>>,
    threads: Option<usize>,
    cors_origin: Option<String>,
    job_gate: RwLock<()>,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(pub(crate) Arc<Inner>);

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl AppState {
    /// Builds the state, replaying the session log if one is configured.
    pub fn new(registry: Registry, config: ServiceConfig) -> io::Result<Self> {
        let (store, events) = match &config.store {
            Some(path) => {
                let (store, events) = SessionStore::open(path)?;
                (Some(Mutex::new(store)), events)
            }
            None => (None, Vec::new()),
        };
        let state = AppState(Arc::new(Inner {
            registry,
            sessions: RwLock::default(),
            jobs: RwLock::default(),
            store,
            threads: config.threads,
            cors_origin: config.cors_origin,
            job_gate: RwLock::new(()),
        }));
        for event in events {
            state.replay(event);
        }
        Ok(state)
    }

    fn replay(&self, event: Event) {
        if let Event::SessionCreated {
            session,
            dataset,
            targets,
        } = &event
        {
            match self.open_session(session.clone(), dataset, targets) {
                Ok(s) => {
                    self.0.sessions.write().unwrap().insert(session.clone(), Arc::new(Mutex::new(s)));
                }
                Err(e) => tracing::warn!("not restoring session {session}: {}", e.message),
            }
            return;
        }
        let Some(slot) = self.session(event.session()) else {
            return;
        };
        let mut s = lock(&slot);
        match event {
            Event::SessionCreated { .. } => unreachable!(),
            Event::Blacklist { blacklist, .. } => s.blacklist = blacklist,
            Event::Pin { name, syndrome, .. } => {
                s.pins.insert(name, syndrome);
            }
            Event::Unpin { name, .. } => {
                s.pins.remove(&name);
            }
            Event::Learned {
                job,
                syndrome,
                semantics,
                ..
            } => match parse_syndrome(&syndrome, s.dataset.schema()) {
                Ok(parsed) => {
                    let counts = count_series(&parsed, &s.dataset, &s.index, semantics);
                    s.learned = Some(Learned { job, syndrome, counts });
                }
                Err(e) => tracing::warn!("dropping learned syndrome of session {}: {e}", s.id),
            },
        }
    }

    pub(crate) fn open_session(&self, id: String, dataset: &str, targets: &str) -> ApiResult<Session> {
        let ds = self
            .0
            .registry
            .datasets
            .get(dataset)
            .ok_or_else(|| ApiError::not_found("unknown_dataset", "dataset", dataset))?;
        let tg = self
            .0
            .registry
            .targets
            .get(targets)
            .ok_or_else(|| ApiError::not_found("unknown_targets", "target series", targets))?;
        let index = TimeIndex::aligned(ds, tg);
        Ok(Session {
            id,
            dataset_name: dataset.to_owned(),
            targets_name: targets.to_owned(),
            dataset: Arc::clone(ds),
            targets: tg.clone(),
            index: Arc::new(index),
            blacklist: BlacklistSpec::default(),
            pins: BTreeMap::new(),
            running: None,
            jobs: Vec::new(),
            learned: None,
        })
    }

    pub(crate) fn session(&self, id: &str) -> Option<Arc<Mutex<Session>>> {
        self.0.sessions.read().unwrap().get(id).cloned()
    }

    pub(crate) fn job(&self, id: &str) -> Option<Arc<Mutex<FitJob>>> {
        self.0.jobs.read().unwrap().get(id).cloned()
    }

    pub(crate) fn record(&self, event: &Event) -> ApiResult<()> {
        if let Some(store) = &self.0.store {
            lock(store)
                .append(event)
                .map_err(|e| ApiError::internal(format!("cannot write session log: {e}")))?;
        }
        Ok(())
    }

    /// Blocks fit workers from starting until the guard is dropped.
    #[doc(hidden)]
    pub fn hold_jobs(&self) -> RwLockWriteGuard<'_, ()> {
        self.0.job_gate.write().unwrap()
    }
}

/// The API router with CORS applied.
pub fn router(state: AppState) -> Router {
    let origin = match &state.0.cors_origin {
        Some(o) => match HeaderValue::from_str(o) {
            Ok(v) => AllowOrigin::exact(v),
            Err(_) => AllowOrigin::any(),
        },
        None => AllowOrigin::any(),
    };
    let cors = CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any);
    routes::routes().with_state(state).layer(cors)
}

/// Serves the API on `listener` until the process is stopped.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> io::Result<()> {
    axum::serve(listener, router(state)).await
}

pub(crate) fn new_id(prefix: char) -> String {
    format!("{prefix}{:016x}", rand::random::<u64>())
}
