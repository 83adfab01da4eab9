//! Local HTTP service for tuning guidance weights by hand.
//!
//! Wire format v1. Every body is JSON; errors are
//! `{"error": {"kind": "...", "message": "..."}}` with a 4xx/5xx status.
//!
//! | method | path                | request                                   | response |
//! |--------|---------------------|-------------------------------------------|----------|
//! | GET    | `/v1/map`           |                                           | `{height, width, rows}`, rows use `.` and `@` |
//! | GET    | `/v1/weights`       |                                           | weight file of the current overlay |
//! | PUT    | `/v1/weights`       | weight file                               | `{"ok": true}`; `invalid_weights` (422) if any weight is not positive |
//! | POST   | `/v1/weights/reset` |                                           | overlay back to the loaded weights |
//! | POST   | `/v1/weights/save`  | `{"path": ...}` (optional)                | writes the overlay; default `<output_dir>/weights.json` |
//! | POST   | `/v1/simulate`      | `{steps?, seed?, algorithm?}`             | `{run_id, throughput, goals_reached, steps, heatmap}` |
//! | GET    | `/v1/runs`          |                                           | runs in submission order: `{run_id, config_digest, throughput, ...}` |
//!
//! Omitted simulate fields fall back to the served config. Simulations run
//! one at a time; reads are served concurrently. Base files on disk are
//! only written by an explicit save.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use wppl_core::domain::Cell;
use wppl_core::guidance::{save_weights, WeightFile};
use wppl_core::simulator::Heatmap;
use wppl_core::{export_heatmap, GuidanceGraph};

use crate::config::{Algorithm, CliError, Loaded, RunConfig};
use crate::run::execute;

pub struct ServeState {
    base: RunConfig,
    loaded: Loaded,
    overlay: RwLock<GuidanceGraph>,
    runs: RwLock<Vec<RunRecord>>,
    sim: tokio::sync::Mutex<()>,
}

impl ServeState {
    pub fn new(base: RunConfig) -> Result<Self, CliError> {
        let loaded = base.load()?;
        Ok(Self {
            overlay: RwLock::new(loaded.guidance.clone()),
            base,
            loaded,
            runs: RwLock::new(Vec::new()),
            sim: tokio::sync::Mutex::new(()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: u64,
    /// SHA-256 of the effective run config and the weights it used.
    pub config_digest: String,
    pub throughput: f64,
    pub steps: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRequest {
    pub steps: Option<usize>,
    pub seed: Option<u64>,
    pub algorithm: Option<Algorithm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateResponse {
    pub run_id: u64,
    pub throughput: f64,
    pub goals_reached: usize,
    pub steps: usize,
    pub heatmap: Heatmap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapResponse {
    pub height: usize,
    pub width: usize,
    pub rows: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SaveRequest {
    path: Option<PathBuf>,
}

pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

pub fn router(state: Arc<ServeState>) -> Router {
    Router::new()
        .route("/v1/map", get(get_map))
        .route("/v1/weights", get(get_weights).put(put_weights))
        .route("/v1/weights/reset", post(reset_weights))
        .route("/v1/weights/save", post(save))
        .route("/v1/simulate", post(simulate))
        .route("/v1/runs", get(get_runs))
        .with_state(state)
}

async fn get_map(State(s): State<Arc<ServeState>>) -> Json<MapResponse> {
    let map = s.loaded.map();
    let rows = (0..map.height())
        .map(|r| {
            (0..map.width())
                .map(|c| match map.cell(map.vertex(r, c)) {
                    Cell::Free => '.',
                    Cell::Obstacle => '@',
                })
                .collect()
        })
        .collect();
    Json(MapResponse {
        height: map.height(),
        width: map.width(),
        rows,
    })
}

async fn get_weights(State(s): State<Arc<ServeState>>) -> Json<WeightFile> {
    Json(s.overlay.read().to_file_data())
}

async fn put_weights(State(s): State<Arc<ServeState>>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let data: WeightFile =
        serde_json::from_slice(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))?;
    let g = GuidanceGraph::from_file_data(s.loaded.map().clone(), &data)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_weights", e.to_string()))?;
    *s.overlay.write() = g;
    Ok(Json(json!({ "ok": true })))
}

async fn reset_weights(State(s): State<Arc<ServeState>>) -> Json<serde_json::Value> {
    *s.overlay.write() = s.loaded.guidance.clone();
    Json(json!({ "ok": true }))
}

async fn save(State(s): State<Arc<ServeState>>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    let req: SaveRequest = parse_body(&body)?;
    let path = req.path.unwrap_or_else(|| s.base.output_dir.join("weights.json"));
    let g = s.overlay.read().clone();
    let internal = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "io", e);
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| internal(e.to_string()))?;
    }
    save_weights(&g, &path).map_err(|e| internal(e.to_string()))?;
    Ok(Json(json!({ "path": path })))
}

fn digest(cfg: &RunConfig, weights: &GuidanceGraph) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(weights.to_text().as_bytes());
    hex::encode(h.finalize())
}

async fn simulate(State(s): State<Arc<ServeState>>, body: Bytes) -> Result<Json<SimulateResponse>, ApiError> {
    let req: SimulateRequest = parse_body(&body)?;
    let mut cfg = s.base.clone();
    if let Some(steps) = req.steps {
        if steps == 0 {
            return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_parameters", "steps must be positive"));
        }
        cfg.total_steps = steps;
    }
    if let Some(seed) = req.seed {
        cfg.seed = seed;
    }
    if let Some(a) = req.algorithm {
        cfg.algorithm = a;
    }

    let _one_at_a_time = s.sim.lock().await;
    let loaded = Loaded {
        instance: s.loaded.instance.clone(),
        guidance: s.overlay.read().clone(),
    };
    let config_digest = digest(&cfg, &loaded.guidance);
    let job = cfg.clone();
    let (out, loaded) = tokio::task::spawn_blocking(move || {
        let out = execute(&job, &loaded, false);
        (out, loaded)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let out = out.map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "simulation_failed", e.to_string()))?;

    let metrics = out.metrics;
    let mut runs = s.runs.write();
    let run_id = runs.len() as u64 + 1;
    runs.push(RunRecord {
        run_id,
        config_digest,
        throughput: metrics.throughput,
        steps: metrics.steps,
        seed: cfg.seed,
        algorithm: cfg.algorithm,
    });
    Ok(Json(SimulateResponse {
        run_id,
        throughput: metrics.throughput,
        goals_reached: metrics.goals_reached,
        steps: metrics.steps,
        heatmap: export_heatmap(&metrics, loaded.map()),
    }))
}

async fn get_runs(State(s): State<Arc<ServeState>>) -> Json<Vec<RunRecord>> {
    Json(s.runs.read().clone())
}

pub async fn serve(cfg: RunConfig, addr: SocketAddr) -> anyhow::Result<()> {
    let state = Arc::new(ServeState::new(cfg)?);
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving /v1");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
