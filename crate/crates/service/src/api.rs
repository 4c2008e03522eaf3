//! HTTP API over a run store.
//!
//! Everything is read-only except `POST /api/runs/{id}/feedback`, which
//! hands typed feedback to a paused human-feedback run and drives the next
//! round in the background.

use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rewardsmith_core::evolution::{
    attach_human_feedback, build_evaluator, resume_search, Candidate, EventEnvelope, IterationRecord, RunConfig,
    RunRecord, RunStatus, SearchError,
};
use rewardsmith_core::generate::Generator;
use rewardsmith_core::store::{LoadedRun, RunStore, StoreError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::report::overall_best_so_far;

pub type GeneratorFactory = dyn Fn(&RunConfig) -> Result<Box<dyn Generator>, SearchError> + Send + Sync;

#[derive(Clone)]
pub struct AppState {
    store: RunStore,
    /// Runs with a feedback round in flight.
    busy: Arc<Mutex<HashSet<String>>>,
    generators: Arc<GeneratorFactory>,
}

impl AppState {
    pub fn new(store: RunStore) -> Self {
        Self::with_generators(store, Arc::new(crate::make_generator))
    }

    pub fn with_generators(store: RunStore, generators: Arc<GeneratorFactory>) -> Self {
        Self {
            store,
            busy: Arc::new(Mutex::new(HashSet::new())),
            generators,
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(run_summary))
        .route("/api/runs/{id}/iterations/{n}", get(iteration_detail))
        .route("/api/runs/{id}/events", get(events))
        .route("/api/runs/{id}/feedback", post(feedback))
        .with_state(state)
}

pub async fn serve(root: PathBuf, bind: SocketAddr) -> std::io::Result<()> {
    if !root.is_dir() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("store root {} does not exist", root.display()),
        ));
    }
    let store = RunStore::open(root).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(AppState::new(store))).await
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) => ApiError(StatusCode::NOT_FOUND, e.to_string()),
            StoreError::Locked { .. } => ApiError(StatusCode::CONFLICT, e.to_string()),
            _ => ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        }
    }
}

fn valid_id(id: &str) -> Result<(), ApiError> {
    if id.is_empty() || id.contains('/') || id.contains('\\') || id.starts_with('.') {
        return Err(ApiError(StatusCode::NOT_FOUND, format!("run {id} not found")));
    }
    Ok(())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

async fn load(state: &AppState, id: String) -> Result<LoadedRun, ApiError> {
    valid_id(&id)?;
    let store = state.store.clone();
    blocking(move || Ok(store.load(&id)?)).await
}

#[derive(Serialize)]
struct RunListEntry {
    run_id: String,
    env: String,
    status: RunStatus,
    last_seq: u64,
    candidates: usize,
    eureka_best_score: Option<f64>,
}

async fn list_runs(State(state): State<AppState>) -> Result<Json<Vec<RunListEntry>>, ApiError> {
    let store = state.store.clone();
    let runs = blocking(move || {
        let mut out = Vec::new();
        for id in store.list()? {
            match store.load(&id) {
                Ok(run) => {
                    let r = &run.record;
                    out.push(RunListEntry {
                        run_id: id,
                        env: r.config.env.clone(),
                        status: r.status,
                        last_seq: r.last_seq,
                        candidates: r.candidate_count(),
                        eureka_best_score: r.eureka_best.as_ref().map(|b| b.score),
                    });
                }
                Err(e) => log::warn!("skipping run {id}: {e}"),
            }
        }
        Ok(out)
    })
    .await?;
    Ok(Json(runs))
}

fn summary(record: &RunRecord) -> Value {
    let awaiting = (record.status == RunStatus::PausedForFeedback).then(|| record.closed_rounds());
    json!({
        "run_id": record.run_id,
        "env": record.config.env,
        "status": record.status,
        "last_seq": record.last_seq,
        "config": record.config,
        "restarts": record.config.evolution.restarts,
        "iterations_per_restart": record.config.evolution.iterations,
        "iterations": record.iterations.iter().map(|it| json!({
            "restart": it.restart,
            "iteration": it.iteration,
            "k": it.k,
            "proposed": it.candidates.len(),
            "scored": it.candidates.iter().filter(|c| c.scored).count(),
            "closed": it.is_closed(),
            "best": it.best,
        })).collect::<Vec<_>>(),
        "candidates": record.candidate_count(),
        "best_per_iteration": record.best_per_iteration(),
        "best_so_far": overall_best_so_far(record),
        "eureka_best": record.eureka_best,
        "final_evaluation": record.final_evaluation,
        "failure": record.failure,
        "awaiting_feedback_for": awaiting,
    })
}

async fn run_summary(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let run = load(&state, id).await?;
    Ok(Json(summary(&run.record)))
}

fn candidate_view(c: &Candidate) -> Value {
    let (fitness, lengths, components) = match &c.report {
        Some(r) => {
            let names: Vec<String> = r
                .checkpoint_snapshots
                .first()
                .map(|s| s.component_means.keys().cloned().collect())
                .unwrap_or_default();
            let components: BTreeMap<String, Vec<f64>> = names
                .into_iter()
                .filter_map(|n| r.component_series(&n).map(|s| (n, s)))
                .collect();
            (r.fitness_series(), r.episode_length_series(), components)
        }
        None => Default::default(),
    };
    json!({
        "sample": c.index.sample,
        "raw_text": c.raw_text,
        "program_text": c.program_text,
        "error": c.error,
        "score": c.score,
        "scored": c.scored,
        "feedback": c.feedback,
        "failure": c.failure,
        "fitness_series": fitness,
        "episode_length_series": lengths,
        "component_series": components,
    })
}

fn iteration_view(index: usize, it: &IterationRecord) -> Value {
    json!({
        "index": index,
        "restart": it.restart,
        "iteration": it.iteration,
        "k": it.k,
        "prompt": it.prompt,
        "human_feedback": it.human_feedback,
        "best": it.best,
        "carried": it.carried,
        "closed": it.is_closed(),
        "candidates": it.candidates.iter().map(candidate_view).collect::<Vec<_>>(),
    })
}

/// `n` indexes rounds in run order, restarts concatenated.
async fn iteration_detail(
    State(state): State<AppState>,
    Path((id, n)): Path<(String, usize)>,
) -> Result<Json<Value>, ApiError> {
    let run = load(&state, id).await?;
    let it = run
        .record
        .iterations
        .get(n)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("iteration {n} not found")))?;
    Ok(Json(iteration_view(n, it)))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    /// How long to wait for new events before answering with none.
    timeout_ms: Option<u64>,
}

#[derive(Serialize)]
struct EventsPage {
    events: Vec<EventEnvelope>,
    last_seq: u64,
    status: RunStatus,
}

const DEFAULT_POLL_MS: u64 = 20_000;
const MAX_POLL_MS: u64 = 60_000;

async fn events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> Result<Json<EventsPage>, ApiError> {
    let deadline = Instant::now() + Duration::from_millis(q.timeout_ms.unwrap_or(DEFAULT_POLL_MS).min(MAX_POLL_MS));
    loop {
        let run = load(&state, id.clone()).await?;
        let fresh: Vec<EventEnvelope> = run.events.into_iter().filter(|e| e.seq > q.since).collect();
        let finished = matches!(run.record.status, RunStatus::Finished);
        if !fresh.is_empty() || finished || Instant::now() >= deadline {
            return Ok(Json(EventsPage {
                events: fresh,
                last_seq: run.record.last_seq,
                status: run.record.status,
            }));
        }
        tokio::time::sleep(Duration::from_millis(100)).await;
    }
}

#[derive(Deserialize)]
struct FeedbackBody {
    text: String,
}

async fn feedback(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> Result<(StatusCode, Json<Value>), ApiError> {
    valid_id(&id)?;
    let text = match body {
        Ok(Json(b)) => b.text,
        Err(JsonRejection::MissingJsonContentType(e)) => {
            return Err(ApiError(StatusCode::UNSUPPORTED_MEDIA_TYPE, e.body_text()))
        }
        Err(e) => return Err(ApiError(StatusCode::BAD_REQUEST, e.body_text())),
    };
    if text.trim().is_empty() {
        return Err(ApiError(StatusCode::BAD_REQUEST, "feedback text is empty".into()));
    }
    {
        let mut busy = state.busy.lock().expect("busy set");
        if busy.contains(&id) {
            return Err(ApiError(StatusCode::CONFLICT, "run is not waiting for feedback".into()));
        }
        busy.insert(id.clone());
    }
    let release = {
        let busy = state.busy.clone();
        let id = id.clone();
        move || {
            busy.lock().expect("busy set").remove(&id);
        }
    };
    let store = state.store.clone();
    let run_id = id.clone();
    let attached = blocking(move || {
        if !store.run_dir(&run_id).exists() {
            return Err(ApiError(StatusCode::NOT_FOUND, format!("run {run_id} not found")));
        }
        let (loaded, mut writer) = store.open_writer(&run_id)?;
        let record = attach_human_feedback(loaded.record, &text, &mut writer).map_err(|e| match e {
            SearchError::NotPaused(_) => ApiError(StatusCode::CONFLICT, "run is not waiting for feedback".into()),
            other => ApiError(StatusCode::INTERNAL_SERVER_ERROR, other.to_string()),
        })?;
        Ok((record, writer))
    })
    .await;
    let (record, mut writer) = match attached {
        Ok(v) => v,
        Err(e) => {
            release();
            return Err(e);
        }
    };
    let iteration = record.closed_rounds();
    let generators = state.generators.clone();
    tokio::task::spawn_blocking(move || {
        let cfg = record.config.clone();
        let outcome = generators(&cfg).and_then(|mut g| {
            let evaluator = build_evaluator(&cfg)?;
            resume_search(record, g.as_mut(), evaluator.as_ref(), &mut writer)
        });
        drop(writer);
        release();
        if let Err(e) = outcome {
            log::error!("feedback round of {} failed: {e}", cfg.run_id());
        }
    });
    Ok((
        StatusCode::ACCEPTED,
        Json(json!({ "run_id": id, "iteration": iteration, "status": RunStatus::Running })),
    ))
}
