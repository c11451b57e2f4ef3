//! Local HTTP API over a project directory.
//!
//! Reads go straight to the files; mutations are serialised by one lock and
//! checked against the design version the client last saw.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tasteprint_core::geometry::{InfillSettings, Point2};
use tasteprint_core::planner::{
    add_free_event, allocate_total_amount, fill_pattern, intensity_to_duration, AllocationReport,
    AllocationRequest, PatternRequest, SprayEvent, TasteDesign,
};
use tasteprint_core::simulator::SimulationOptions;
use tokio::sync::Mutex;

use crate::error::{AppError, AppResult, ErrorKind};
use crate::pipeline;
use crate::project::Project;

struct AppState {
    project: Project,
    writes: Mutex<()>,
}

type Shared = Arc<AppState>;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::Validation => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Parse => StatusCode::BAD_REQUEST,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::Io => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(self)).into_response()
    }
}

/// Parses a JSON body; an empty body yields `T::default()`.
fn body_or_default<T: DeserializeOwned + Default>(body: &Bytes) -> AppResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    Ok(serde_json::from_slice(body)?)
}

fn body<T: DeserializeOwned>(body: &Bytes) -> AppResult<T> {
    Ok(serde_json::from_slice(body)?)
}

fn json_text(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

#[derive(Deserialize)]
struct MeshUpload {
    filename: String,
    /// Base64 of the file bytes.
    data: String,
    #[serde(default = "default_layer_height")]
    layer_height: f64,
}

fn default_layer_height() -> f64 {
    1.6
}

async fn upload_mesh(State(s): State<Shared>, raw: Bytes) -> AppResult<impl IntoResponse> {
    let req: MeshUpload = body(&raw)?;
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(req.data.trim())
        .map_err(|e| AppError::parse(format!("mesh data is not base64: {e}")))?;
    let _guard = s.writes.lock().await;
    let record = s.project.upload_mesh(&req.filename, &bytes, req.layer_height)?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_slices(State(s): State<Shared>) -> AppResult<Response> {
    Ok(json_text(s.project.slices_text()?))
}

async fn get_design(State(s): State<Shared>) -> AppResult<Response> {
    Ok(json_text(s.project.design()?.to_json()))
}

async fn put_design(State(s): State<Shared>, raw: Bytes) -> AppResult<Response> {
    let design: TasteDesign = body(&raw)?;
    let _guard = s.writes.lock().await;
    let sent = design.version;
    Ok(json_text(s.project.commit_design(design, Some(sent))?.to_json()))
}

#[derive(Deserialize)]
struct EventRequest {
    channel: u8,
    position: Point2,
    #[serde(default)]
    duration_ms: Option<u32>,
    /// 1–10, mapped onto the calibrated duration range.
    #[serde(default)]
    intensity: Option<u8>,
    #[serde(default)]
    standoff_mm: Option<f64>,
    #[serde(default)]
    extrapolated: bool,
    #[serde(default)]
    version: Option<u64>,
}

async fn add_event(State(s): State<Shared>, Path(layer): Path<usize>, raw: Bytes) -> AppResult<Response> {
    let req: EventRequest = body(&raw)?;
    let standoff = match req.standoff_mm {
        Some(v) => v,
        None => s.project.profile()?.default_standoff_mm,
    };
    let _guard = s.writes.lock().await;
    let design = s.project.edit_design(req.version, |d, slices, cal| {
        let duration = match (req.duration_ms, req.intensity) {
            (Some(ms), _) => ms,
            (None, Some(level)) => intensity_to_duration(level, cal)?,
            (None, None) => return Err(AppError::validation("either duration_ms or intensity is required")),
        };
        let event = SprayEvent {
            extrapolated: req.extrapolated,
            ..SprayEvent::new(req.channel, req.position, duration, standoff)
        };
        Ok(add_free_event(d, layer, event, slices, cal)?)
    })?;
    Ok((StatusCode::CREATED, json_text(design.to_json())).into_response())
}

#[derive(Deserialize)]
struct LayerPatternRequest {
    layer: usize,
    #[serde(flatten)]
    pattern: PatternRequest,
    #[serde(default)]
    version: Option<u64>,
}

async fn pattern(State(s): State<Shared>, raw: Bytes) -> AppResult<Response> {
    let req: LayerPatternRequest = body(&raw)?;
    let _guard = s.writes.lock().await;
    let design = s
        .project
        .edit_design(req.version, |d, slices, cal| Ok(fill_pattern(d, req.layer, &req.pattern, slices, cal)?))?;
    Ok(json_text(design.to_json()))
}

#[derive(Deserialize)]
struct VersionedAllocation {
    #[serde(flatten)]
    allocation: AllocationRequest,
    #[serde(default)]
    version: Option<u64>,
}

#[derive(Serialize)]
struct AllocationResponse {
    design: TasteDesign,
    report: AllocationReport,
}

async fn allocate(State(s): State<Shared>, raw: Bytes) -> AppResult<Json<AllocationResponse>> {
    let req: VersionedAllocation = body(&raw)?;
    let _guard = s.writes.lock().await;
    let mut report = None;
    let design = s.project.edit_design(req.version, |d, slices, cal| {
        let (design, r) = allocate_total_amount(d, &req.allocation, slices, cal)?;
        report = Some(r);
        Ok(design)
    })?;
    Ok(Json(AllocationResponse {
        design,
        report: report.expect("allocation ran"),
    }))
}

async fn get_calibration(State(s): State<Shared>) -> AppResult<Response> {
    Ok(json_text(s.project.calibration()?.to_json()))
}

#[derive(Deserialize)]
struct PredictRequest {
    #[serde(default)]
    standoff_mm: Option<f64>,
    #[serde(default)]
    duration_ms: Option<f64>,
    #[serde(default)]
    intensity: Option<u8>,
}

async fn predict(State(s): State<Shared>, raw: Bytes) -> AppResult<Json<pipeline::Prediction>> {
    let req: PredictRequest = body(&raw)?;
    let cal = s.project.calibration()?;
    let duration = match (req.duration_ms, req.intensity) {
        (Some(ms), _) => ms,
        (None, Some(level)) => intensity_to_duration(level, &cal)? as f64,
        (None, None) => return Err(AppError::validation("either duration_ms or intensity is required")),
    };
    let standoff = match req.standoff_mm {
        Some(v) => v,
        None => s.project.profile()?.default_standoff_mm,
    };
    Ok(Json(pipeline::predict(&cal, standoff, duration)?))
}

async fn generate(State(s): State<Shared>, raw: Bytes) -> AppResult<Json<pipeline::GcodeSummary>> {
    let infill: InfillSettings = body_or_default(&raw)?;
    let _guard = s.writes.lock().await;
    Ok(Json(s.project.generate_gcode(infill)?))
}

async fn gcode_file(State(s): State<Shared>) -> AppResult<Response> {
    let text = s.project.gcode_text()?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/x-gcode; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"tasteprint.gcode\""),
        ],
        text,
    )
        .into_response())
}

async fn run_simulation(State(s): State<Shared>, raw: Bytes) -> AppResult<Json<pipeline::SimulationSummary>> {
    let options: SimulationOptions = body_or_default(&raw)?;
    let _guard = s.writes.lock().await;
    Ok(Json(s.project.simulate(options)?))
}

async fn get_simulation(State(s): State<Shared>) -> AppResult<Json<pipeline::SimulationSummary>> {
    let _guard = s.writes.lock().await;
    Ok(Json(s.project.simulation()?))
}

async fn simulation_layer(State(s): State<Shared>, Path(layer): Path<usize>) -> AppResult<Response> {
    let map = s.project.simulation_layer(layer)?;
    Ok(json_text(serde_json::to_string(&map)?))
}

pub fn router(project: Project) -> Router {
    let state = Arc::new(AppState {
        project,
        writes: Mutex::new(()),
    });
    Router::new()
        .route("/api/mesh", post(upload_mesh))
        .route("/api/slices", get(get_slices))
        .route("/api/design", get(get_design).put(put_design))
        .route("/api/design/layers/{k}/events", post(add_event))
        .route("/api/design/pattern", post(pattern))
        .route("/api/design/allocate", post(allocate))
        .route("/api/calibration", get(get_calibration))
        .route("/api/predict", post(predict))
        .route("/api/gcode", post(generate))
        .route("/api/gcode/file", get(gcode_file))
        .route("/api/simulate", post(run_simulation))
        .route("/api/simulation", get(get_simulation))
        .route("/api/simulation/layers/{k}", get(simulation_layer))
        .with_state(state)
}

/// Binds `addr` and serves until the process ends.
pub async fn serve(addr: SocketAddr, project: Project) -> AppResult<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| AppError::new(ErrorKind::Io, format!("cannot listen on {addr}: {e}")))?;
    log::info!("serving {} on http://{}", project.dir().display(), listener.local_addr()?);
    axum::serve(listener, router(project)).await?;
    Ok(())
}
