//! HTTP API over the risk pipeline.
//!
//! * `GET /config` resolved configuration plus the level/color scale
//! * `GET /zones?gaze=<left|center|right|unknown>[&a_zones=false]` zone
//!   polygons colored for a gaze
//! * `POST /assess` stateless what-if assessment of a [`SceneState`]
//! * `GET /stream[?coalesce=true][&from=<ms>]` WebSocket of tick frames
//!
//! Every risk level the API returns comes from `dras_core`; this crate only
//! validates, joins and serializes.

pub mod feed;
pub mod hub;

use std::collections::HashSet;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dras_core::config::Config;
use dras_core::geometry::{zone_polygons, GroundPoint, LayoutError, ZonePolygon, ZoneRef};
use dras_core::ldm::{Ldm, Millis};
use dras_core::pipeline::{assess_positions, TickOutput};
use dras_core::risk::{is_aware, risk_matrix, GazeTarget, RiskLevel, RiskMatrix};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tower_http::services::ServeDir;

use crate::hub::{StreamHub, Subscription};

/// Chord count per quarter circle for the rounded band outlines.
pub const ARC_RESOLUTION: usize = 32;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    Invalid(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.to_string() });
        (StatusCode::BAD_REQUEST, Json(body)).into_response()
    }
}

struct Inner {
    config: Arc<Config>,
    matrix: RiskMatrix,
    polygons: Vec<ZonePolygon>,
    polygons_without_a: Vec<ZonePolygon>,
    ldm: Arc<Ldm>,
    hub: Arc<StreamHub>,
}

/// Shared, read-mostly server state. Cloning is cheap.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn without_a_zones(config: &Config) -> Config {
    let mut c = config.clone();
    c.layout.a_zones_enabled = false;
    c
}

impl AppState {
    pub fn new(config: Config) -> Result<Self, LayoutError> {
        let polygons = zone_polygons(&config.layout, ARC_RESOLUTION)?;
        let polygons_without_a = zone_polygons(&without_a_zones(&config).layout, ARC_RESOLUTION)?;
        Ok(Self {
            inner: Arc::new(Inner {
                matrix: risk_matrix(&config.risk),
                config: Arc::new(config),
                polygons,
                polygons_without_a,
                ldm: Arc::new(Ldm::new()),
                hub: StreamHub::new(),
            }),
        })
    }

    pub fn config(&self) -> Arc<Config> {
        Arc::clone(&self.inner.config)
    }

    pub fn ldm(&self) -> Arc<Ldm> {
        Arc::clone(&self.inner.ldm)
    }

    pub fn hub(&self) -> Arc<StreamHub> {
        Arc::clone(&self.inner.hub)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelView {
    pub level: RiskLevel,
    pub class_code: Option<u8>,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigView {
    #[serde(flatten)]
    pub config: Config,
    pub levels: Vec<LevelView>,
}

pub fn config_view(config: &Config) -> ConfigView {
    let levels = RiskLevel::ALL
        .iter()
        .map(|&level| LevelView { level, class_code: level.class_code(), color: level.color().to_string() })
        .collect();
    ConfigView { config: config.clone(), levels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneView {
    pub zone: ZoneRef,
    pub risk: RiskLevel,
    pub color: String,
    pub aware: bool,
    pub vertices: Vec<GroundPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonesView {
    pub gaze: GazeTarget,
    pub a_zones_enabled: bool,
    pub zones: Vec<ZoneView>,
}

/// Polygons joined with the risk matrix for `gaze`.
pub fn zones_view(polygons: &[ZonePolygon], matrix: &RiskMatrix, gaze: GazeTarget, a_zones_enabled: bool) -> ZonesView {
    let zones = polygons
        .iter()
        .map(|p| {
            let aware = p.zone.column().is_some_and(|c| is_aware(c, gaze));
            let risk = matrix.get(p.zone, aware);
            ZoneView { zone: p.zone, risk, color: risk.color().to_string(), aware, vertices: p.vertices.clone() }
        })
        .collect();
    ZonesView { gaze, a_zones_enabled, zones }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePedestrian {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

/// What-if input: pedestrians in the assessment frame and the driver's gaze.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneState {
    /// Timestamp echoed in the result.
    #[serde(default)]
    pub t: Millis,
    pub pedestrians: Vec<ScenePedestrian>,
    pub gaze: GazeTarget,
    /// Informational; the risk scale always describes a reversing vehicle.
    #[serde(default)]
    pub reversing: bool,
    /// Overrides the configured A-zone switch for this request.
    #[serde(default)]
    pub a_zones: Option<bool>,
}

impl SceneState {
    pub fn validate(&self) -> Result<(), ApiError> {
        let mut seen = HashSet::new();
        for p in &self.pedestrians {
            if p.id.is_empty() {
                return Err(ApiError::Invalid("pedestrian id must not be empty".into()));
            }
            if !seen.insert(p.id.as_str()) {
                return Err(ApiError::Invalid(format!("duplicate pedestrian id {:?}", p.id)));
            }
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(ApiError::Invalid(format!("pedestrian {:?} has a non-finite position", p.id)));
            }
        }
        Ok(())
    }
}

/// Stateless assessment; the same scene always gives the same result.
pub fn assess_scene(scene: &SceneState, config: &Config) -> Result<TickOutput, ApiError> {
    scene.validate()?;
    let peds = scene.pedestrians.iter().map(|p| (p.id.clone(), GroundPoint::new(p.x, p.y)));
    Ok(match scene.a_zones {
        Some(enabled) if enabled != config.layout.a_zones_enabled => {
            let mut c = config.clone();
            c.layout.a_zones_enabled = enabled;
            assess_positions(scene.t, scene.gaze, peds, &c)
        }
        _ => assess_positions(scene.t, scene.gaze, peds, config),
    })
}

async fn get_config(State(state): State<AppState>) -> Json<ConfigView> {
    Json(config_view(&state.inner.config))
}

#[derive(Debug, Deserialize)]
struct ZonesQuery {
    gaze: Option<String>,
    a_zones: Option<bool>,
}

async fn get_zones(State(state): State<AppState>, Query(q): Query<ZonesQuery>) -> Result<Json<ZonesView>, ApiError> {
    let gaze = match q.gaze.as_deref() {
        None => GazeTarget::Unknown,
        Some(s) => s.parse().map_err(|e: dras_core::risk::GazeParseError| ApiError::Invalid(e.to_string()))?,
    };
    let enabled = q.a_zones.unwrap_or(state.inner.config.layout.a_zones_enabled);
    let polygons = if enabled { &state.inner.polygons } else { &state.inner.polygons_without_a };
    Ok(Json(zones_view(polygons, &state.inner.matrix, gaze, enabled)))
}

async fn post_assess(State(state): State<AppState>, body: axum::body::Bytes) -> Result<Json<TickOutput>, ApiError> {
    let scene: SceneState = serde_json::from_slice(&body).map_err(|e| ApiError::Invalid(format!("scene: {e}")))?;
    assess_scene(&scene, &state.inner.config).map(Json)
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    coalesce: bool,
    from: Option<Millis>,
}

async fn get_stream(State(state): State<AppState>, Query(q): Query<StreamQuery>, ws: WebSocketUpgrade) -> Response {
    let sub = state.inner.hub.subscribe(Subscription { coalesce: q.coalesce, from: q.from });
    ws.on_upgrade(move |socket| pump(socket, sub))
}

async fn pump(mut socket: WebSocket, mut sub: hub::Subscriber) {
    loop {
        tokio::select! {
            batch = sub.next_batch() => {
                for frame in batch {
                    let text = serde_json::to_string(&*frame).expect("frame serializes");
                    if socket.send(Message::Text(text.into())).await.is_err() {
                        return;
                    }
                }
            }
            incoming = socket.recv() => match incoming {
                None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Build the router; `ui_dir` serves a static bundle for every other path.
pub fn router(state: AppState, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/config", get(get_config))
        .route("/zones", get(get_zones))
        .route("/assess", post(post_assess))
        .route("/stream", get(get_stream))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serve `app` on an already bound listener until the future is dropped.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}
