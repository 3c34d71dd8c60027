//! HTTP service over the scene store and the library operations.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crbgate_core::estimator::EstimatorConfig;
use crbgate_core::gate::{gate_results, read_frames, FrameRecord, Gate, DEFAULT_ALPHA};
use crbgate_core::scene::Scene;

use crate::error::{AppError, ErrorCode};
use crate::ops::{self, CoverageRequest, HeatmapRequest, SimulateRequest};
use crate::store::{SceneRecord, SceneStore};

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<SceneStore>,
    pub trial_cap: usize,
}

impl AppState {
    pub fn new(store: SceneStore) -> Self {
        AppState { store: Arc::new(store), trial_cap: ops::DEFAULT_TRIAL_CAP }
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.code.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, AppError>;

/// Parses a JSON body ourselves so malformed input gets the standard error shape.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| AppError::validation(format!("invalid request body: {e}")))
}

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| {
        AppError::new(ErrorCode::NotFound, format!("no scene {raw}")).with_detail(json!({ "scene_id": raw }))
    })
}

/// Runs CPU-bound work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    F: FnOnce() -> ApiResult<T> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::internal(format!("worker failed: {e}")))?
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/scenes", post(create_scene))
        .route("/scenes/{id}", get(get_scene).put(put_scene))
        .route("/scenes/{id}/heatmap", post(heatmap))
        .route("/scenes/{id}/simulate", post(simulate))
        .route("/scenes/{id}/coverage", post(coverage))
        .route("/scenes/{id}/gate", post(gate))
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "version": env!("CARGO_PKG_VERSION") }))
}

async fn create_scene(State(state): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SceneRecord>)> {
    let scene: Scene = parse_body(&body)?;
    let record = state.store.create(scene)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_scene(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SceneRecord>> {
    Ok(Json(state.store.get(parse_id(&id)?)?))
}

/// Body of `PUT /scenes/{id}`: the revision the client last saw.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneUpdate {
    pub revision: u64,
    pub scene: Scene,
}

async fn put_scene(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SceneRecord>> {
    let id = parse_id(&id)?;
    let update: SceneUpdate = parse_body(&body)?;
    Ok(Json(state.store.update(id, update.scene, update.revision)?))
}

async fn heatmap(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let scene = state.store.get(parse_id(&id)?)?.scene;
    let req: HeatmapRequest = parse_body(&body)?;
    let map = blocking(move || ops::heatmap(&scene, &req)).await?;
    Ok(Json(map).into_response())
}

async fn simulate(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let scene = state.store.get(parse_id(&id)?)?.scene;
    let req: SimulateRequest = parse_body(&body)?;
    let cap = state.trial_cap;
    let report = blocking(move || ops::simulate(&scene, &req, cap)).await?;
    Ok(Json(report).into_response())
}

async fn coverage(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let scene = state.store.get(parse_id(&id)?)?.scene;
    let req: CoverageRequest = parse_body(&body)?;
    let cap = state.trial_cap;
    let report = blocking(move || ops::coverage(&scene, &req, cap)).await?;
    Ok(Json(report).into_response())
}

#[derive(Debug, Deserialize)]
pub struct GateQuery {
    pub alpha: Option<f64>,
}

/// Measurement JSONL in, region JSONL out, one line per frame as it is gated.
async fn gate(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(query): Query<GateQuery>,
    body: Bytes,
) -> ApiResult<Response> {
    let scene = state.store.get(parse_id(&id)?)?.scene;
    let alpha = query.alpha.unwrap_or(DEFAULT_ALPHA);
    // reject a bad scene or level before the stream starts
    Gate::new(&scene, alpha, &EstimatorConfig::default())?;

    let (tx, rx) = tokio::sync::mpsc::channel::<String>(64);
    tokio::task::spawn_blocking(move || {
        let gate = Gate::new(&scene, alpha, &EstimatorConfig::default()).expect("validated above");
        for result in gate_results(gate, read_frames(body.as_ref())) {
            let mut line = FrameRecord::from(&result).to_json_line();
            line.push('\n');
            if tx.blocking_send(line).is_err() {
                break;
            }
        }
    });
    let stream = futures::stream::unfold(rx, |mut rx| async move {
        rx.recv().await.map(|line| (Ok::<_, Infallible>(line), rx))
    });
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], Body::from_stream(stream)).into_response())
}
