//! HTTP API over the routing engine: scenario upload, state, routing,
//! slot stepping and alpha/rho sweeps, plus static files at `/`.

pub mod error;
pub mod store;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use safewalk_core::geo::GeoPoint;
use safewalk_core::riskmap::{check_alpha, check_d_th, check_rho};
use safewalk_core::router::RouteRequest;
use safewalk_core::round6;
use safewalk_core::sim::{ScenarioInputs, DEFAULT_SEED};

pub use error::{ApiError, ErrorCode};
pub use store::{ScenarioEntry, ScenarioRecord, Store, HISTORY_LEN};

/// Upper bound on request bodies; road maps and device tables can be large.
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;
/// Upper bound on slots advanced by a single step request.
pub const MAX_STEP_SLOTS: usize = 10_000;

pub const SCHEMAS: &[(&str, &str)] = &[
    ("error", include_str!("../schemas/error.json")),
    ("health", include_str!("../schemas/health.json")),
    ("scenario_created", include_str!("../schemas/scenario_created.json")),
    ("scenario_list", include_str!("../schemas/scenario_list.json")),
    ("state", include_str!("../schemas/state.json")),
    ("route", include_str!("../schemas/route.json")),
    ("step", include_str!("../schemas/step.json")),
    ("sweep", include_str!("../schemas/sweep.json")),
];

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

impl AppState {
    pub fn new(store: Store) -> AppState {
        AppState { store: Arc::new(store) }
    }
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/schemas/{name}", get(schema))
        .route("/scenarios", post(create_scenario).get(list_scenarios))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/scenarios/{id}/state", get(get_state))
        .route("/scenarios/{id}/route", post(post_route))
        .route("/scenarios/{id}/step", post(post_step))
        .route("/scenarios/{id}/sweep", get(get_sweep))
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.fallback(not_found),
    }
}

/// Serves until Ctrl-C.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    axum::serve(listener, router(state, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn query_error(e: QueryRejection) -> ApiError {
    ApiError::bad_request(e.body_text())
}

async fn not_found() -> ApiError {
    ApiError::new(ErrorCode::NotFound, "no such endpoint")
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn schema(Path(name): Path<String>) -> Response {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    match SCHEMAS.iter().find(|(n, _)| *n == name) {
        Some((_, body)) => ([(header::CONTENT_TYPE, "application/schema+json")], *body).into_response(),
        None => ApiError::new(ErrorCode::NotFound, format!("no schema {name:?}")).into_response(),
    }
}

#[derive(Deserialize)]
struct CreateBody {
    #[serde(flatten)]
    inputs: ScenarioInputs,
    #[serde(default)]
    seed: Option<u64>,
}

fn summary(entry: &ScenarioEntry) -> Value {
    let snap = entry.latest();
    json!({
        "id": entry.id,
        "seed": entry.seed,
        "slot": snap.slot,
        "snapshot_id": snap.id(),
    })
}

async fn create_scenario(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let CreateBody { inputs, seed } = parse_body(&body)?;
    let seed = seed.unwrap_or(DEFAULT_SEED);
    let store = state.store.clone();
    let entry = blocking(move || store.create(inputs, seed)).await?;
    let mut out = summary(&entry);
    out["report"] = serde_json::to_value(&entry.report).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((StatusCode::CREATED, Json(out)).into_response())
}

async fn list_scenarios(State(state): State<AppState>) -> Json<Value> {
    let items: Vec<Value> = state.store.list().iter().map(|e| summary(e)).collect();
    Json(json!({ "scenarios": items }))
}

async fn get_scenario(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entry = state.store.get(&id)?;
    let mut out = summary(&entry);
    out["report"] = serde_json::to_value(&entry.report).map_err(|e| ApiError::internal(e.to_string()))?;
    out["config"] = serde_json::to_value(entry.scenario.config).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct StateQuery {
    slot: Option<usize>,
}

async fn get_state(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<StateQuery>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(|e| query_error(e).with_field("slot"))?;
    let entry = state.store.get(&id)?;
    let snap = match q.slot {
        Some(slot) => entry.snapshot(slot)?,
        None => entry.latest(),
    };
    let view = blocking(move || {
        let mut v = entry.scenario.state_view(&snap);
        v["scenario_id"] = json!(entry.id);
        Ok(v)
    })
    .await?;
    Ok(Json(view))
}

#[derive(Deserialize)]
struct RouteBody {
    origin: GeoPoint,
    destination: GeoPoint,
    alpha: f64,
    ego_device: String,
    #[serde(default)]
    rho: Option<f64>,
    #[serde(default)]
    d_th: Option<f64>,
}

fn check_field<E: Into<safewalk_core::Error>>(field: &str, r: Result<(), E>) -> Result<(), ApiError> {
    r.map_err(|e| ApiError::from(e.into()).with_field(field))
}

async fn post_route(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let b: RouteBody = parse_body(&body)?;
    let entry = state.store.get(&id)?;
    let scenario = entry.scenario.clone();
    let rho = b.rho.unwrap_or(scenario.config.rho);
    let d_th = b.d_th.unwrap_or(scenario.config.d_th);
    check_field("alpha", check_alpha(b.alpha))?;
    check_field("rho", check_rho(rho))?;
    check_field("d_th", check_d_th(d_th))?;
    check_field("origin", scenario.project(b.origin).map(|_| ()))?;
    check_field("destination", scenario.project(b.destination).map(|_| ()))?;
    if scenario.device_index(&b.ego_device).is_none() {
        return Err(ApiError::new(ErrorCode::UnknownDevice, format!("unknown device {:?}", b.ego_device)).with_field("ego_device"));
    }
    let snap = entry.latest();
    let alpha = b.alpha;
    let req = RouteRequest {
        origin: b.origin,
        destination: b.destination,
        alpha,
        ego_device: b.ego_device,
    };
    let out = blocking(move || {
        let outcome = scenario.route_with(&snap, &req, rho, d_th)?;
        let r = &outcome.route;
        Ok(json!({
            "scenario_id": entry.id,
            "snapshot_id": outcome.snapshot_id,
            "weights_version": outcome.weights_version,
            "alpha": alpha,
            "rho": rho,
            "d_th": d_th,
            "travel_distance_m": round6(r.travel_distance),
            "safety_score": round6(r.safety_score),
            "total_cost": round6(r.total_cost),
            "route": r.to_geojson(&scenario.graph, alpha, &outcome.snapshot_id),
        }))
    })
    .await?;
    Ok(Json(out))
}

#[derive(Deserialize)]
struct StepBody {
    #[serde(default = "one")]
    n_slots: usize,
}

fn one() -> usize {
    1
}

async fn post_step(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let b: StepBody = if body.is_empty() { StepBody { n_slots: 1 } } else { parse_body(&body)? };
    if b.n_slots < 1 || b.n_slots > MAX_STEP_SLOTS {
        return Err(ApiError::invalid("n_slots", format!("{} is outside 1..={MAX_STEP_SLOTS}", b.n_slots)));
    }
    let entry = state.store.get(&id)?;
    let _writer = entry.writer.lock().await;
    let worker = entry.clone();
    let snaps = blocking(move || {
        let mut cur = worker.latest();
        let mut out = Vec::with_capacity(b.n_slots);
        for _ in 0..b.n_slots {
            cur = Arc::new(worker.scenario.step(&cur)?);
            out.push(cur.clone());
        }
        Ok(out)
    })
    .await?;
    entry.publish(snaps);
    let store = state.store.clone();
    let record = entry.record();
    blocking(move || store.persist(&record)).await?;
    let snap = entry.latest();
    Ok(Json(json!({
        "scenario_id": entry.id,
        "slot": snap.slot,
        "snapshot_id": snap.id(),
        "clor_community_count": snap.clor_partition.count(),
    })))
}

fn parse_list(field: &str, raw: &str) -> Result<Vec<f64>, ApiError> {
    raw.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| ApiError::invalid(field, format!("{s:?} is not a number"))))
        .collect()
}

fn parse_point(field: &str, raw: Option<&String>) -> Result<GeoPoint, ApiError> {
    let raw = raw.ok_or_else(|| ApiError::invalid(field, "required as lat,lon"))?;
    let v = parse_list(field, raw)?;
    match v[..] {
        [lat, lon] => Ok(GeoPoint { lat, lon }),
        _ => Err(ApiError::invalid(field, format!("{raw:?} is not lat,lon"))),
    }
}

/// Default sweep: 0.0, 0.1, ..., 1.0.
fn default_alphas() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

async fn get_sweep(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<HashMap<String, String>>, QueryRejection>,
) -> Result<Json<Value>, ApiError> {
    let Query(q) = query.map_err(query_error)?;
    let entry = state.store.get(&id)?;
    let scenario = entry.scenario.clone();
    let alphas = match q.get("alphas") {
        Some(raw) => parse_list("alphas", raw)?,
        None => default_alphas(),
    };
    let rhos = match q.get("rhos") {
        Some(raw) => parse_list("rhos", raw)?,
        None => vec![scenario.config.rho],
    };
    let origin = parse_point("origin", q.get("origin"))?;
    let destination = parse_point("destination", q.get("destination"))?;
    check_field("origin", scenario.project(origin).map(|_| ()))?;
    check_field("destination", scenario.project(destination).map(|_| ()))?;
    let ego = q.get("ego").cloned().ok_or_else(|| ApiError::invalid("ego", "required"))?;
    if scenario.device_index(&ego).is_none() {
        return Err(ApiError::new(ErrorCode::UnknownDevice, format!("unknown device {ego:?}")).with_field("ego"));
    }
    let snap = entry.latest();
    let req = RouteRequest {
        origin,
        destination,
        alpha: alphas.first().copied().unwrap_or(0.0),
        ego_device: ego,
    };
    let out = blocking(move || {
        let table = scenario.alpha_sweep(&snap, &req, &alphas, &rhos)?;
        let mut v = table.to_json();
        v["scenario_id"] = json!(entry.id);
        v["snapshot_id"] = json!(snap.id());
        Ok(v)
    })
    .await?;
    Ok(Json(out))
}
