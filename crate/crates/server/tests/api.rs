use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use dras_core::config::Config;
use dras_core::geometry::{assessment_to_sensor, Column, Point3, Side, ZoneRef};
use dras_core::ingest::{ExteriorDetection, GazeEvent, ObjectClass, ReplaySpeed, SourcedPercept};
use dras_core::ldm::Ldm;
use dras_core::pipeline::{tick, TickOutput};
use dras_core::risk::{GazeTarget, RiskLevel};
use dras_server::feed::replay_into;
use dras_server::{assess_scene, router, AppState, ConfigView, ScenePedestrian, SceneState, ZonesView};
use futures::StreamExt;
use http_body_util::BodyExt;
use tower::ServiceExt;

fn app() -> (AppState, axum::Router) {
    let state = AppState::new(Config::default()).unwrap();
    (state.clone(), router(state, None))
}

async fn call(app: &axum::Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Vec<u8>) {
    call(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &axum::Router, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
    call(app, req).await
}

async fn zones(app: &axum::Router, gaze: &str) -> ZonesView {
    let (status, body) = get(app, &format!("/zones?gaze={gaze}")).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_slice(&body).unwrap()
}

fn scene(gaze: GazeTarget, peds: &[(&str, f64, f64)]) -> SceneState {
    SceneState {
        t: 1000,
        pedestrians: peds.iter().map(|(id, x, y)| ScenePedestrian { id: id.to_string(), x: *x, y: *y }).collect(),
        gaze,
        reversing: true,
        a_zones: None,
    }
}

#[tokio::test]
async fn config_endpoint_lists_levels_and_round_trips() {
    let (_, app) = app();
    let (status, body) = get(&app, "/config").await;
    assert_eq!(status, StatusCode::OK);
    let view: ConfigView = serde_json::from_slice(&body).unwrap();
    assert_eq!(view.config, Config::default());
    let colors: Vec<_> = view.levels.iter().map(|l| l.color.as_str()).collect();
    assert_eq!(colors, ["gray", "green", "yellow", "orange", "red"]);
}

#[tokio::test]
async fn center_gaze_escalates_flanks_only() {
    let (_, app) = app();
    let v = zones(&app, "center").await;
    assert_eq!(v.zones.len(), 14);
    let risk = |z: ZoneRef| v.zones.iter().find(|p| p.zone == z).unwrap().risk;
    assert_eq!(risk(ZoneRef::zone(Column::C, 2)), RiskLevel::High);
    assert_eq!(risk(ZoneRef::zone(Column::C, 3)), RiskLevel::Moderate);
    assert_eq!(risk(ZoneRef::zone(Column::L, 2)), RiskLevel::VeryHigh);
    assert_eq!(risk(ZoneRef::zone(Column::R, 3)), RiskLevel::High);
    assert_eq!(risk(ZoneRef::zone(Column::L, 4)), RiskLevel::Low);
    for z in &v.zones {
        assert_eq!(z.color, z.risk.color());
    }
}

#[tokio::test]
async fn c1_is_red_for_every_gaze() {
    let (_, app) = app();
    for gaze in ["left", "center", "right", "unknown"] {
        let v = zones(&app, gaze).await;
        let c1 = v.zones.iter().find(|z| z.zone == ZoneRef::zone(Column::C, 1)).unwrap();
        assert_eq!((c1.risk, c1.color.as_str()), (RiskLevel::VeryHigh, "red"), "{gaze}");
    }
}

#[tokio::test]
async fn left_and_right_colorings_mirror() {
    let (_, app) = app();
    let left = zones(&app, "left").await;
    let right = zones(&app, "right").await;
    for z in &left.zones {
        let m = right.zones.iter().find(|r| r.zone == z.zone.mirrored()).unwrap();
        assert_eq!(z.color, m.color, "{}", z.zone);
        let mirrored: Vec<_> = z.vertices.iter().map(|p| p.mirrored()).collect();
        for p in &mirrored {
            assert!(m.vertices.iter().any(|q| (q.x - p.x).abs() < 1e-9 && (q.y - p.y).abs() < 1e-9));
        }
    }
}

#[tokio::test]
async fn three_gazes_give_three_colorings() {
    let (_, app) = app();
    let mut seen = Vec::new();
    for gaze in ["left", "center", "right"] {
        let v = zones(&app, gaze).await;
        let colors: Vec<_> = v.zones.iter().map(|z| z.color.clone()).collect();
        assert!(!seen.contains(&colors));
        seen.push(colors);
    }
}

#[tokio::test]
async fn a_zone_toggle_and_bad_gaze() {
    let (_, app) = app();
    let (status, body) = get(&app, "/zones?gaze=left&a_zones=false").await;
    assert_eq!(status, StatusCode::OK);
    let v: ZonesView = serde_json::from_slice(&body).unwrap();
    assert!(!v.a_zones_enabled);
    assert_eq!(v.zones.len(), 12);
    assert!(v.zones.iter().all(|z| !matches!(z.zone, ZoneRef::AZone(_))));

    let (status, body) = get(&app, "/zones?gaze=rear").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(String::from_utf8(body).unwrap().contains("rear"));
}

#[tokio::test]
async fn assess_fig_walkthrough_and_drag() {
    let (_, app) = app();
    let (status, body) = post(&app, "/assess", r#"{"pedestrians":[{"id":"b","x":2.9,"y":0}],"gaze":"right"}"#).await;
    assert_eq!(status, StatusCode::OK);
    let out: TickOutput = serde_json::from_slice(&body).unwrap();
    assert_eq!(out.assessments[0].zone, ZoneRef::zone(Column::C, 3));
    assert_eq!(out.assessments[0].risk, RiskLevel::High);

    let (_, body) = post(&app, "/assess", r#"{"pedestrians":[{"id":"b","x":0.5,"y":0}],"gaze":"center"}"#).await;
    let out: TickOutput = serde_json::from_slice(&body).unwrap();
    assert_eq!(out.scene_max, RiskLevel::VeryHigh);

    let (_, body) = post(&app, "/assess", r#"{"pedestrians":[{"id":"b","x":4.5,"y":0}],"gaze":"center"}"#).await;
    let out: TickOutput = serde_json::from_slice(&body).unwrap();
    assert_eq!(out.assessments[0].risk, RiskLevel::VeryLow);
}

#[tokio::test]
async fn assess_empty_and_invalid_scenes() {
    let (_, app) = app();
    let (status, body) = post(&app, "/assess", r#"{"pedestrians":[],"gaze":"left"}"#).await;
    assert_eq!(status, StatusCode::OK);
    let out: TickOutput = serde_json::from_slice(&body).unwrap();
    assert!(out.assessments.is_empty());
    assert_eq!(out.scene_max, RiskLevel::VeryLow);

    for bad in [
        r#"{"pedestrians":[{"id":"a","x":1,"y":0},{"id":"a","x":2,"y":0}],"gaze":"left"}"#,
        r#"{"pedestrians":[{"id":"a","x":1e999,"y":0}],"gaze":"left"}"#,
        r#"{"pedestrians":[],"gaze":"up"}"#,
        r#"{"pedestrians":[{"id":"","x":1,"y":0}],"gaze":"left"}"#,
        r#"not json"#,
    ] {
        let (status, _) = post(&app, "/assess", bad).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test]
async fn assess_is_byte_stable() {
    let (_, app) = app();
    let body = r#"{"pedestrians":[{"id":"a","x":1.2,"y":-1.7},{"id":"b","x":-0.5,"y":1.5}],"gaze":"left"}"#;
    let first = post(&app, "/assess", body).await;
    assert_eq!(first, post(&app, "/assess", body).await);
    let out: TickOutput = serde_json::from_slice(&first.1).unwrap();
    assert_eq!(out.assessments[1].zone, ZoneRef::AZone(Side::Left));
}

#[test]
fn assess_scene_matches_tick_on_loaded_store() {
    let config = Config::default();
    let positions = [("a", 0.4, 0.1), ("b", 2.9, 0.0), ("c", 1.5, 2.5), ("d", 3.3, -2.8), ("e", -0.8, -1.4), ("f", 5.0, 0.0)];
    for gaze in GazeTarget::ALL {
        let s = scene(gaze, &positions);
        let direct = assess_scene(&s, &config).unwrap();

        let ldm = Ldm::new();
        for (id, x, y) in positions {
            let det = ExteriorDetection {
                timestamp: s.t,
                object_class: ObjectClass::Pedestrian,
                position: assessment_to_sensor(Point3::new(x, y, 0.9), &config.sensor),
                confidence: 1.0,
                track_id: Some(id.to_string()),
            };
            ldm.ingest(&SourcedPercept::detection("lidar0", det)).unwrap();
        }
        if gaze != GazeTarget::Unknown {
            ldm.ingest(&SourcedPercept::gaze("dms0", GazeEvent { timestamp: s.t, target: gaze, confidence: 1.0 })).unwrap();
        }
        let via_store = tick(&ldm, s.t, &config);
        assert_eq!(direct.scene_max, via_store.scene_max);
        assert_eq!(direct.gaze_used, via_store.gaze_used);
        for (a, b) in direct.assessments.iter().zip(&via_store.assessments) {
            assert_eq!((&a.pedestrian, a.zone, a.risk), (&b.pedestrian, b.zone, b.risk));
            assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        }
        assert_eq!(direct.assessments.len(), via_store.assessments.len());
    }
}

fn replay_percepts(frames: u64) -> Vec<SourcedPercept> {
    let config = Config::default();
    let mut out = Vec::new();
    for i in 1..=frames {
        let t = i * 100;
        let det = ExteriorDetection {
            timestamp: t,
            object_class: ObjectClass::Pedestrian,
            position: assessment_to_sensor(Point3::new(0.3 + (i % 50) as f64 * 0.1, 0.0, 0.9), &config.sensor),
            confidence: 1.0,
            track_id: Some("p0".into()),
        };
        out.push(SourcedPercept::detection("lidar0", det));
        out.push(SourcedPercept::gaze("dms0", GazeEvent { timestamp: t, target: GazeTarget::Right, confidence: 1.0 }));
    }
    out
}

async fn start_server() -> (AppState, std::net::SocketAddr) {
    let (state, app) = app();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(dras_server::serve(listener, app));
    (state, addr)
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn connect(addr: std::net::SocketAddr, query: &str) -> Ws {
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream{query}")).await.unwrap();
    ws
}

async fn read_until(ws: &mut Ws, last_t: u64) -> Vec<TickOutput> {
    let mut got = Vec::new();
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame within 10 s").unwrap().unwrap();
        if let tokio_tungstenite::tungstenite::Message::Text(text) = msg {
            let frame: TickOutput = serde_json::from_str(&text).unwrap();
            let t = frame.timestamp;
            got.push(frame);
            if t == last_t {
                return got;
            }
        }
    }
}

async fn run_replay(state: &AppState, frames: u64) -> usize {
    replay_into(replay_percepts(frames), ReplaySpeed::Fast, state.ldm(), state.hub(), state.config()).await.unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stream_fan_out_is_ordered_and_identical() {
    let (state, addr) = start_server().await;
    let mut a = connect(addr, "").await;
    let mut b = connect(addr, "?coalesce=false").await;
    // idle server: subscribers are open but nothing has been sent yet
    assert!(tokio::time::timeout(Duration::from_millis(100), a.next()).await.is_err());
    tokio::time::sleep(Duration::from_millis(50)).await;

    assert_eq!(run_replay(&state, 100).await, 100);
    let got_a = read_until(&mut a, 10_000).await;
    let got_b = read_until(&mut b, 10_000).await;
    assert_eq!(got_a.len(), 100);
    assert!(got_a.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    assert_eq!(got_a, got_b);
    assert!(got_a.iter().all(|f| f.gaze_used == GazeTarget::Right && f.assessments.len() == 1));
}

#[tokio::test]
async fn slow_coalescing_consumer_ends_on_final_frame() {
    // single-threaded runtime: the socket task cannot run while the burst is published
    let (state, addr) = start_server().await;
    let mut slow = connect(addr, "?coalesce=true").await;
    tokio::time::sleep(Duration::from_millis(50)).await;
    let ldm = Ldm::new();
    let config = Config::default();
    for p in replay_percepts(100) {
        ldm.ingest(&p).unwrap();
    }
    for i in 1..=100u64 {
        state.hub().publish(tick(&ldm, i * 100, &config));
    }
    let got = read_until(&mut slow, 10_000).await;
    assert_eq!(got.len(), 1);
    assert_eq!(got.last().unwrap(), &*state.hub().last().unwrap());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn seek_replays_history_from_timestamp() {
    let (state, addr) = start_server().await;
    run_replay(&state, 50).await;
    let mut ws = connect(addr, "?from=2050").await;
    let got = read_until(&mut ws, 5000).await;
    assert_eq!(got.first().unwrap().timestamp, 2100);
    assert_eq!(got.len(), 30);
}
