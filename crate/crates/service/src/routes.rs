// SPDX-License-Identifier: Apache-2.0

use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Map, Value};
use syndro_core::learner::fit_with;
use syndro_core::{
    count_series, format_syndrome, parse_syndrome, score_model, BlacklistSpec, LearnerConfig, ObjectiveKind,
    Semantics, Syndrome,
};

use crate::error::{ApiError, ApiResult};
use crate::store::Event;
use crate::{lock, new_id, AppState, FitJob, JobState, Learned, Session};

pub(crate) fn routes() -> Router<AppState> {
    Router::new()
        .route("/api/registry", get(registry))
        .route("/api/sessions", post(create_session).get(list_sessions))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/fit", post(start_fit))
        .route("/api/sessions/{id}/evaluate", post(evaluate))
        .route("/api/sessions/{id}/series", get(series))
        .route("/api/sessions/{id}/blacklist", put(put_blacklist).get(get_blacklist))
        .route("/api/sessions/{id}/pins/{name}", put(put_pin).delete(delete_pin))
        .route("/api/jobs/{id}", get(get_job))
}

fn session_of(state: &AppState, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
    state
        .session(id)
        .ok_or_else(|| ApiError::not_found("session_not_found", "session", id))
}

fn parse_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn body_text(body: &Bytes) -> ApiResult<&str> {
    std::str::from_utf8(body).map_err(|_| ApiError::bad_request("invalid_utf8", "body is not UTF-8"))
}

fn session_view(s: &Session) -> Value {
    json!({
        "id": s.id,
        "dataset": s.dataset_name,
        "targets": s.targets_name,
        "granularity": s.granularity(),
        "n_instances": s.dataset.len(),
        "dropped_instances": s.index.dropped(),
        "labels": s.index.labels(),
        "blacklist": s.blacklist,
        "pins": s.pins,
        "running_job": s.running,
        "jobs": s.jobs,
        "learned": s.learned.as_ref().map(|l| json!({ "job": l.job, "syndrome": l.syndrome })),
    })
}

async fn registry(State(state): State<AppState>) -> Json<Value> {
    let reg = &state.0.registry;
    Json(json!({
        "datasets": reg.datasets.iter().map(|(name, ds)| json!({
            "name": name,
            "n_instances": ds.len(),
            "schema": ds.schema(),
        })).collect::<Vec<_>>(),
        "targets": reg.targets.iter().map(|(name, t)| json!({
            "name": name,
            "granularity": t.granularity(),
            "labels": t.labels(),
        })).collect::<Vec<_>>(),
    }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    dataset: Option<String>,
    targets: Option<String>,
    blacklist: Option<BlacklistSpec>,
}

fn only<'a>(names: impl Iterator<Item = &'a String>, what: &str) -> ApiResult<String> {
    let names: Vec<&String> = names.collect();
    match names.as_slice() {
        [one] => Ok((*one).clone()),
        _ => Err(ApiError::bad_request(
            "missing_field",
            format!("{} {what}s are registered; name one", names.len()),
        )),
    }
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_json(&body)?;
    let reg = &state.0.registry;
    let dataset = match req.dataset {
        Some(d) => d,
        None => only(reg.datasets.keys(), "dataset")?,
    };
    let targets = match req.targets {
        Some(t) => t,
        None => only(reg.targets.keys(), "target series")?,
    };
    let id = new_id('s');
    let mut session = state.open_session(id.clone(), &dataset, &targets)?;
    let blacklist = req.blacklist.unwrap_or_default();
    blacklist
        .resolve(session.dataset.schema())
        .map_err(|e| ApiError::bad_request("invalid_blacklist", e.to_string()))?;
    state.record(&Event::SessionCreated {
        session: id.clone(),
        dataset,
        targets,
    })?;
    if !blacklist.is_empty() {
        state.record(&Event::Blacklist {
            session: id.clone(),
            blacklist: blacklist.clone(),
        })?;
    }
    session.blacklist = blacklist;
    let view = session_view(&session);
    state.0.sessions.write().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Value> {
    let sessions: Vec<Arc<Mutex<Session>>> = state.0.sessions.read().unwrap().values().cloned().collect();
    Json(Value::Array(sessions.iter().map(|s| session_view(&lock(s))).collect()))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = session_of(&state, &id)?;
    let view = session_view(&lock(&slot));
    Ok(Json(view))
}

/// Applies the request's fields on top of the session defaults. Unknown
/// fields are rejected rather than ignored.
fn resolve_config(session: &Session, body: &Bytes) -> ApiResult<LearnerConfig> {
    let base = LearnerConfig {
        blacklist: session.blacklist.clone(),
        ..LearnerConfig::default()
    };
    let Value::Object(mut merged) = serde_json::to_value(&base).expect("config serializes") else {
        unreachable!("config serializes to an object")
    };
    let deltas: Map<String, Value> = parse_json(body)?;
    for (key, value) in deltas {
        if !merged.contains_key(&key) {
            return Err(ApiError::bad_request("unknown_field", format!("unknown config field `{key}`")).with("field", key));
        }
        merged.insert(key, value);
    }
    let config: LearnerConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
    config
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string()))?;
    config
        .candidate_options(session.dataset.schema())
        .map_err(|e| ApiError::bad_request("invalid_blacklist", e.to_string()))?;
    Ok(config)
}

async fn start_fit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let slot = session_of(&state, &id)?;
    let (job, dataset, index, targets) = {
        let mut s = lock(&slot);
        if let Some(running) = &s.running {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "fit_running",
                format!("job `{running}` is still running in this session"),
            )
            .with("job", running.clone()));
        }
        let config = resolve_config(&s, &body)?;
        let job = FitJob {
            id: new_id('j'),
            session: id.clone(),
            state: JobState::Queued,
            config,
            progress: 0,
            trace: Vec::new(),
            result: None,
            error: None,
        };
        s.running = Some(job.id.clone());
        s.jobs.push(job.id.clone());
        (job, Arc::clone(&s.dataset), Arc::clone(&s.index), s.targets.clone())
    };
    let job_id = job.id.clone();
    let config = job.config.clone();
    let job_slot = Arc::new(Mutex::new(job));
    state.0.jobs.write().unwrap().insert(job_id.clone(), Arc::clone(&job_slot));

    let worker_state = state.clone();
    tokio::task::spawn_blocking(move || {
        let gate = worker_state.0.job_gate.read().unwrap();
        lock(&job_slot).state = JobState::Running;
        let result = fit_with(&dataset, &index, &targets, &config, worker_state.0.threads, |entry| {
            let mut job = lock(&job_slot);
            job.trace.push(entry.clone());
            job.progress = job.trace.len();
        });
        drop(gate);
        let mut s = lock(&slot);
        let mut job = lock(&job_slot);
        match result {
            Ok(report) => {
                let learned = Learned {
                    job: job.id.clone(),
                    syndrome: report.syndrome_text.clone(),
                    counts: report.counts.clone(),
                };
                let event = Event::Learned {
                    session: s.id.clone(),
                    job: job.id.clone(),
                    syndrome: learned.syndrome.clone(),
                    semantics: config.semantics,
                };
                if let Err(e) = worker_state.record(&event) {
                    tracing::warn!("{}", e.message);
                }
                s.learned = Some(learned);
                job.trace = report.trace.clone();
                job.progress = job.trace.len();
                job.result = Some(Arc::new(report));
                job.state = JobState::Done;
            }
            Err(e) => {
                job.error = Some(e.to_string());
                job.state = JobState::Failed;
            }
        }
        s.running = None;
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job_id, "state": JobState::Queued }))))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = state.job(&id).ok_or_else(|| ApiError::not_found("job_not_found", "job", &id))?;
    let job = lock(&slot).clone();
    Ok(Json(serde_json::to_value(&job).map_err(|e| ApiError::internal(e.to_string()))?))
}

#[derive(Debug, Deserialize)]
struct SemanticsQuery {
    semantics: Option<Semantics>,
}

fn scores(target: &[u64], counts: &[u64]) -> ApiResult<Value> {
    let mut out = Map::new();
    for kind in [ObjectiveKind::Pearson, ObjectiveKind::Spearman, ObjectiveKind::Kendall] {
        let s = score_model(kind, target, counts).map_err(|e| ApiError::bad_request("invalid_series", e.to_string()))?;
        out.insert(kind.to_string(), json!(s));
    }
    Ok(Value::Object(out))
}

fn parse_for(session: &Session, text: &str) -> ApiResult<Syndrome> {
    parse_syndrome(text, session.dataset.schema()).map_err(|e| ApiError::dsl("invalid_dsl", &e))
}

async fn evaluate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SemanticsQuery>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = session_of(&state, &id)?;
    let (dataset, index, targets) = {
        let s = lock(&slot);
        (Arc::clone(&s.dataset), Arc::clone(&s.index), s.targets.clone())
    };
    let text = body_text(&body)?;
    let syndrome = parse_syndrome(text, dataset.schema()).map_err(|e| ApiError::dsl("invalid_dsl", &e))?;
    let semantics = q.semantics.unwrap_or_default();
    let counts = count_series(&syndrome, &dataset, &index, semantics);
    Ok(Json(json!({
        "syndrome": format_syndrome(&syndrome, dataset.schema()),
        "semantics": semantics,
        "support": syndrome.coverage(&dataset).count(),
        "labels": index.labels(),
        "target": targets.counts(),
        "counts": counts,
        "scores": scores(targets.counts(), counts.as_slice())?,
    })))
}

#[derive(Debug, Deserialize)]
struct SeriesQuery {
    which: Option<String>,
}

async fn series(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<SeriesQuery>,
) -> ApiResult<Json<Value>> {
    let slot = session_of(&state, &id)?;
    let s = lock(&slot);
    let which = q.which.unwrap_or_else(|| "target".into());
    let (counts, syndrome): (Vec<u64>, Option<String>) = if which == "target" {
        (s.targets.counts().to_vec(), None)
    } else if which == "learned" {
        let l = s
            .learned
            .as_ref()
            .ok_or_else(|| ApiError::not_found("no_learned", "learned syndrome in session", &s.id))?;
        (l.counts.0.clone(), Some(l.syndrome.clone()))
    } else if let Some(name) = which.strip_prefix("pinned:") {
        let text = s
            .pins
            .get(name)
            .ok_or_else(|| ApiError::not_found("pin_not_found", "pin", name))?;
        let parsed = parse_for(&s, text)?;
        let counts = count_series(&parsed, &s.dataset, &s.index, Semantics::Disjunctive);
        (counts.0, Some(text.clone()))
    } else {
        return Err(ApiError::bad_request(
            "invalid_query",
            format!("`which` must be target, learned or pinned:<name>, not `{which}`"),
        ));
    };
    Ok(Json(json!({
        "which": which,
        "syndrome": syndrome,
        "labels": s.index.labels(),
        "counts": counts,
    })))
}

async fn get_blacklist(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<BlacklistSpec>> {
    let slot = session_of(&state, &id)?;
    let blacklist = lock(&slot).blacklist.clone();
    Ok(Json(blacklist))
}

async fn put_blacklist(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<BlacklistSpec>> {
    let slot = session_of(&state, &id)?;
    let blacklist: BlacklistSpec = parse_json(&body)?;
    let mut s = lock(&slot);
    blacklist
        .resolve(s.dataset.schema())
        .map_err(|e| ApiError::bad_request("invalid_blacklist", e.to_string()))?;
    state.record(&Event::Blacklist {
        session: id,
        blacklist: blacklist.clone(),
    })?;
    s.blacklist = blacklist.clone();
    Ok(Json(blacklist))
}

async fn put_pin(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<Value>> {
    let slot = session_of(&state, &id)?;
    let text = body_text(&body)?;
    let mut s = lock(&slot);
    let parsed = parse_for(&s, text)?;
    let canonical = format_syndrome(&parsed, s.dataset.schema());
    state.record(&Event::Pin {
        session: id,
        name: name.clone(),
        syndrome: canonical.clone(),
    })?;
    s.pins.insert(name.clone(), canonical.clone());
    Ok(Json(json!({ "name": name, "syndrome": canonical })))
}

async fn delete_pin(
    State(state): State<AppState>,
    Path((id, name)): Path<(String, String)>,
) -> ApiResult<StatusCode> {
    let slot = session_of(&state, &id)?;
    let mut s = lock(&slot);
    if !s.pins.contains_key(&name) {
        return Err(ApiError::not_found("pin_not_found", "pin", &name));
    }
    state.record(&Event::Unpin {
        session: id,
        name: name.clone(),
    })?;
    s.pins.remove(&name);
    Ok(StatusCode::NO_CONTENT)
}
