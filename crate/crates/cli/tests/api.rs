use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use ustrack_cli::server::{router, Session, SessionConfig};
use ustrack_core::annot::load_layer;
use ustrack_core::jitterfilter::Window;
use ustrack_core::synth::{render_sequence, MotionField, SynthSpec};
use ustrack_core::{AnnotationLayer, FilterConfig, FrameSequence, Point2, Trajectory};

fn sequence(frames: usize, side: usize, motion: MotionField) -> FrameSequence {
    let spec = SynthSpec {
        width: side,
        height: side,
        frames,
        seed: 5,
        motion,
        ..SynthSpec::default()
    };
    render_sequence(&spec, &[]).unwrap().0
}

fn app_with(seq: FrameSequence, layers: Vec<AnnotationLayer>, save_dir: &std::path::Path) -> Router {
    let config = SessionConfig {
        filter: FilterConfig {
            window: Window::Frames(10),
            ..FilterConfig::default()
        },
        save_dir: save_dir.to_path_buf(),
    };
    router(Arc::new(Session::new(seq, layers, config).unwrap()))
}

fn app(layers: Vec<AnnotationLayer>) -> Router {
    app_with(sequence(40, 64, MotionField::default()), layers, std::env::temp_dir().as_path())
}

fn layer(name: &str, labels: &[&str]) -> AnnotationLayer {
    AnnotationLayer::with_labels(name, labels.iter().copied()).unwrap()
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    bytes: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.bytes)))
    }
}

async fn send(app: &Router, method: Method, uri: &str, body: Option<Value>, if_match: Option<u64>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(rev) = if_match {
        req = req.header(header::IF_MATCH, format!("\"{rev}\""));
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, bytes }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    send(app, Method::POST, uri, Some(body), None).await
}

async fn put_point(app: &Router, layer: &str, label: &str, frame: usize, x: f64, y: f64, rev: Option<u64>) -> Reply {
    let uri = format!("/api/layers/{layer}/labels/{label}/frames/{frame}");
    send(app, Method::PUT, &uri, Some(json!({ "x": x, "y": y })), rev).await
}

async fn wait_for_job(app: &Router, id: u64) -> Value {
    for _ in 0..600 {
        let r = get(app, &format!("/api/jobs/{id}")).await;
        assert_eq!(r.status, StatusCode::OK);
        let v = r.json();
        if v["state"] != "running" {
            return v;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("job {id} did not finish");
}

#[tokio::test]
async fn put_then_get_round_trips_coordinates() {
    let app = app(vec![layer("labeled", &["a"])]);
    let (x, y) = (12.345678901234567, 0.1 + 0.2);
    let r = put_point(&app, "labeled", "a", 7, x, y, None).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.json());
    let v = get(&app, "/api/layers/labeled/labels/a").await.json();
    assert_eq!(v["points"], json!([{ "frame": 7, "x": x, "y": y }]));
    assert_eq!(v["points"][0]["x"].as_f64().unwrap().to_bits(), x.to_bits());
    assert_eq!(v["points"][0]["y"].as_f64().unwrap().to_bits(), y.to_bits());
}

#[tokio::test]
async fn frame_out_of_range_is_404() {
    let app = app_with(sequence(600, 16, MotionField::default()), vec![], std::env::temp_dir().as_path());
    let meta = get(&app, "/api/meta").await.json();
    assert_eq!(meta["frames"], 600);
    assert_eq!(get(&app, "/api/frame/99999").await.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/frame/600").await.status, StatusCode::NOT_FOUND);
    let ok = get(&app, "/api/frame/599").await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(&ok.bytes[..8], b"\x89PNG\r\n\x1a\n");
}

#[tokio::test]
async fn filter_job_on_static_session_returns_input() {
    let mut constant = layer("model", &["p", "q"]);
    constant.insert_trajectory("p", Trajectory::from_dense(&vec![Point2::new(30.25, 31.5); 40]));
    constant.insert_trajectory("q", Trajectory::from_dense(&vec![Point2::new(22.0, 40.75); 40]));
    let app = app(vec![constant.clone()]);

    let r = post(&app, "/api/ops/filter", json!({ "layer": "model" })).await;
    assert_eq!(r.status, StatusCode::ACCEPTED, "{}", r.json());
    let started = r.json();
    assert_eq!(started["layer"], "model_lkrstc");
    assert_eq!(started["window_frames"], 10);
    let done = wait_for_job(&app, started["job"].as_u64().unwrap()).await;
    assert_eq!(done["state"], "done", "{done}");
    assert_eq!(done["progress"], 1.0);

    for label in ["p", "q"] {
        let v = get(&app, &format!("/api/layers/model_lkrstc/labels/{label}")).await.json();
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 40);
        let expect = constant.label(label).unwrap().get(0).unwrap();
        for p in pts {
            let (x, y) = (p["x"].as_f64().unwrap(), p["y"].as_f64().unwrap());
            assert!((x - expect.x).abs() < 1e-9 && (y - expect.y).abs() < 1e-9, "{label}: {p}");
        }
    }
}

#[tokio::test]
async fn filter_validation_is_synchronous() {
    let mut sparse = layer("sparse", &["p"]);
    sparse.set_point("p", 3, Point2::new(5.0, 5.0)).unwrap();
    let mut dense = layer("dense", &["p"]);
    dense.insert_trajectory("p", Trajectory::from_dense(&vec![Point2::new(30.0, 30.0); 40]));
    let app = app(vec![sparse, dense]);

    let r = post(&app, "/api/ops/filter", json!({ "layer": "dense", "window": { "frames": 41 } })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["error"].as_str().unwrap().contains("window exceeds sequence length"));
    assert!(r.json()["fields"]["window"].is_string());

    let r = post(&app, "/api/ops/filter", json!({ "layer": "sparse" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["fields"]["layer"].as_str().unwrap().contains("missing"));

    let r = post(&app, "/api/ops/filter", json!({ "layer": "nope" })).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    assert_eq!(get(&app, "/api/jobs/999").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn stale_revision_is_409() {
    let app = app(vec![layer("labeled", &["a"])]);
    let r = put_point(&app, "labeled", "a", 1, 10.0, 10.0, Some(0)).await;
    assert_eq!(r.status, StatusCode::OK);
    let rev = r.json()["rev"].as_u64().unwrap();
    assert_eq!(rev, 1);

    let stale = put_point(&app, "labeled", "a", 1, 20.0, 20.0, Some(0)).await;
    assert_eq!(stale.status, StatusCode::CONFLICT);
    assert_eq!(stale.json()["rev"], 1);
    let v = get(&app, "/api/layers/labeled/labels/a").await.json();
    assert_eq!(v["points"][0]["x"], 10.0);

    let del = send(&app, Method::DELETE, "/api/layers/labeled/labels/a/frames/1", None, Some(0)).await;
    assert_eq!(del.status, StatusCode::CONFLICT);
    let del = send(&app, Method::DELETE, "/api/layers/labeled/labels/a/frames/1", None, Some(rev)).await;
    assert_eq!(del.status, StatusCode::OK);
    let v = get(&app, "/api/layers/labeled/labels/a").await.json();
    assert_eq!(v["points"], json!([]));
    assert_eq!(v["rev"], 2);

    let bad = send(&app, Method::DELETE, "/api/layers/labeled/labels/a/frames/1", None, None).await;
    assert_eq!(bad.status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_puts_serialize() {
    let app = app(vec![layer("labeled", &["a", "b"])]);

    // Distinct cells: every write lands.
    let mut tasks = tokio::task::JoinSet::new();
    for f in 0..40usize {
        for label in ["a", "b"] {
            let app = app.clone();
            tasks.spawn(async move { put_point(&app, "labeled", label, f, f as f64, 1.0, None).await.status });
        }
    }
    while let Some(s) = tasks.join_next().await {
        assert_eq!(s.unwrap(), StatusCode::OK);
    }
    for label in ["a", "b"] {
        let v = get(&app, &format!("/api/layers/labeled/labels/{label}")).await.json();
        assert_eq!(v["points"].as_array().unwrap().len(), 40);
    }
    let rev = get(&app, "/api/layers/labeled/labels/a").await.json()["rev"].as_u64().unwrap();
    assert_eq!(rev, 80);

    // Same cell, same expected revision: exactly one winner.
    let mut tasks = tokio::task::JoinSet::new();
    for k in 0..16 {
        let app = app.clone();
        tasks.spawn(async move {
            let r = put_point(&app, "labeled", "a", 5, 10.0, 2.0 + k as f64, Some(rev)).await;
            (r.status, 2.0 + k as f64)
        });
    }
    let mut winners = Vec::new();
    while let Some(res) = tasks.join_next().await {
        let (status, y) = res.unwrap();
        match status {
            StatusCode::OK => winners.push(y),
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!(winners.len(), 1);
    let v = get(&app, "/api/layers/labeled/labels/a").await.json();
    let cell = v["points"].as_array().unwrap().iter().find(|p| p["frame"] == 5).unwrap().clone();
    assert_eq!(cell, json!({ "frame": 5, "x": 10.0, "y": winners[0] }));
}

#[tokio::test]
async fn validation_errors_name_fields() {
    let app = app(vec![layer("labeled", &["a"])]);
    let r = put_point(&app, "labeled", "a", 0, 64.0, 3.0, None).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let v = r.json();
    assert!(v["fields"]["x"].is_string() && v["fields"].get("y").is_none(), "{v}");

    let r = send(
        &app,
        Method::PUT,
        "/api/layers/labeled/labels/a/frames/0",
        Some(json!({ "x": 1.0 })),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["fields"]["y"].is_string(), "{}", r.json());

    let r = send(
        &app,
        Method::PUT,
        "/api/layers/labeled/labels/a/frames/0",
        Some(json!({ "x": "left", "y": 1.0 })),
        None,
    )
    .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["fields"]["x"].is_string(), "{}", r.json());

    // Integer JSON numbers are accepted as coordinates.
    let r = send(&app, Method::PUT, "/api/layers/labeled/labels/a/frames/0", Some(json!({"x": 1, "y": 1})), None).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["rev"], 1);

    let r = post(&app, "/api/layers", json!({ "name": "" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["fields"]["name"].is_string());
}

#[tokio::test]
async fn unknown_resources_are_404() {
    let app = app(vec![layer("labeled", &["a"])]);
    for uri in [
        "/api/layers/nope/labels/a",
        "/api/layers/labeled/labels/zz",
        "/api/layers/nope/annotated-frames",
        "/api/nothing-here",
    ] {
        assert_eq!(get(&app, uri).await.status, StatusCode::NOT_FOUND, "{uri}");
    }
    assert_eq!(put_point(&app, "nope", "a", 0, 1.0, 1.0, None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(put_point(&app, "labeled", "zz", 0, 1.0, 1.0, None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(put_point(&app, "labeled", "a", 40, 1.0, 1.0, None).await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn layer_and_label_management() {
    let app = app(vec![]);
    assert_eq!(get(&app, "/api/layers").await.json(), json!([]));
    let r = post(&app, "/api/layers", json!({ "name": "labeled" })).await;
    assert_eq!(r.status, StatusCode::CREATED);
    assert_eq!(post(&app, "/api/layers", json!({ "name": "labeled" })).await.status, StatusCode::CONFLICT);
    let r = post(&app, "/api/layers/labeled/labels", json!({ "label": "knee" })).await;
    assert_eq!(r.status, StatusCode::CREATED);
    for f in [30, 4, 17] {
        put_point(&app, "labeled", "knee", f, 3.0, 4.0, None).await;
    }
    let frames = get(&app, "/api/layers/labeled/annotated-frames").await.json();
    assert_eq!(frames, json!([4, 17, 30]));
    let layers = get(&app, "/api/layers").await.json();
    assert_eq!(layers[0]["name"], "labeled");
    assert_eq!(layers[0]["labels"], json!(["knee"]));
    assert_eq!(layers[0]["points"], 3);
    assert_eq!(layers[0]["dirty"], true);
}

#[tokio::test]
async fn guess_and_interpolate_follow_motion() {
    let seq = sequence(30, 64, MotionField::Translation { vx: 1.0, vy: 0.0 });
    let mut labeled = layer("labeled", &["a"]);
    labeled.set_point("a", 0, Point2::new(16.0, 32.0)).unwrap();
    labeled.set_point("a", 20, Point2::new(36.0, 32.0)).unwrap();
    let app = app_with(seq, vec![labeled], std::env::temp_dir().as_path());

    let g = post(&app, "/api/ops/guess", json!({ "layer": "labeled", "label": "a", "frame": 5 })).await;
    assert_eq!(g.status, StatusCode::OK, "{}", g.json());
    let g = g.json();
    assert_eq!(g["status"], "ok");
    assert_eq!(g["source_frame"], 0);
    assert!((g["x"].as_f64().unwrap() - 21.0).abs() < 0.3, "{g}");
    assert!((g["y"].as_f64().unwrap() - 32.0).abs() < 0.3, "{g}");
    // A guess is never stored.
    assert_eq!(get(&app, "/api/layers/labeled/annotated-frames").await.json(), json!([0, 20]));

    let r = post(&app, "/api/ops/interpolate", json!({ "layer": "labeled" })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(r.json()["fields"]["label"].is_string());

    let r = send(
        &app,
        Method::POST,
        "/api/ops/interpolate",
        Some(json!({ "layer": "labeled", "label": "a", "range": [0, 20] })),
        Some(0),
    )
    .await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.json());
    assert_eq!(r.json()["modified"], 19);
    let v = get(&app, "/api/layers/labeled/labels/a").await.json();
    for p in v["points"].as_array().unwrap() {
        let f = p["frame"].as_f64().unwrap();
        assert!((p["x"].as_f64().unwrap() - (16.0 + f)).abs() < 0.3, "{p}");
    }
}

#[tokio::test]
async fn trim_copy_and_save() {
    let dir = tempfile::tempdir().unwrap();
    let mut labeled = layer("labeled", &["a", "b"]);
    for f in 0..6 {
        labeled.set_point("a", f, Point2::new(1.0 + f as f64, 2.0)).unwrap();
        if f % 2 == 0 {
            labeled.set_point("b", f, Point2::new(3.0, 4.0)).unwrap();
        }
    }
    let app = app_with(sequence(40, 64, MotionField::default()), vec![labeled, layer("empty", &[])], dir.path());

    let r = post(&app, "/api/ops/copy", json!({ "src": "labeled", "dst": "empty", "range": [2, 4], "all": true })).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.json());
    assert_eq!(r.json()["copied"], 5);
    assert_eq!(get(&app, "/api/layers/empty/annotated-frames").await.json(), json!([2, 3, 4]));

    let r = post(&app, "/api/ops/trim", json!({ "layer": "labeled", "expected": ["a", "b"] })).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["removed"], json!([1, 3, 5]));
    assert_eq!(get(&app, "/api/layers/labeled/annotated-frames").await.json(), json!([0, 2, 4]));
    let r = post(&app, "/api/ops/trim", json!({ "layer": "labeled", "expected": [] })).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = post(&app, "/api/save", json!({ "layer": "labeled" })).await;
    assert_eq!(r.status, StatusCode::OK);
    let path = std::path::PathBuf::from(r.json()["path"].as_str().unwrap());
    assert_eq!(path, dir.path().join("labeled.annot.json"));
    let saved = load_layer(&path, None).unwrap();
    assert_eq!(saved.annotated_frames(), vec![0, 2, 4]);
    let layers = get(&app, "/api/layers").await.json();
    let entry = layers.as_array().unwrap().iter().find(|l| l["name"] == "labeled").unwrap().clone();
    assert_eq!(entry["dirty"], false);
}

#[tokio::test]
async fn cors_allows_only_localhost() {
    let app = app(vec![]);
    let preflight = |origin: &'static str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/api/meta")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "PUT")
            .body(Body::empty())
            .unwrap()
    };
    let ok = app.clone().oneshot(preflight("http://localhost:5173")).await.unwrap();
    assert_eq!(ok.headers()[header::ACCESS_CONTROL_ALLOW_ORIGIN], "http://localhost:5173");
    let denied = app.clone().oneshot(preflight("http://example.com")).await.unwrap();
    assert!(denied.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).is_none());
}

#[tokio::test]
async fn spec_and_index_are_served() {
    let app = app(vec![]);
    let spec = get(&app, "/api/spec").await.json();
    assert_eq!(spec["openapi"], "3.0.3");
    for path in [
        "/api/meta",
        "/api/frame/{i}",
        "/api/layers",
        "/api/layers/{layer}/labels/{label}/frames/{frame}",
        "/api/layers/{layer}/annotated-frames",
        "/api/ops/filter",
        "/api/jobs/{id}",
        "/api/save",
    ] {
        assert!(spec["paths"][path].is_object(), "{path}");
    }
    let index = get(&app, "/").await;
    assert_eq!(index.status, StatusCode::OK);
    assert!(String::from_utf8(index.bytes).unwrap().contains("/api/meta"));
}
