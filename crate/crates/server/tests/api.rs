use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use vesseltrack_core::api::{
    CreateSequenceRequest, FramePayload, PhantomResponse, PushFrameResponse, ScoreRequest,
    ScoreResponse, SequenceInfo,
};
use vesseltrack_core::phantom::{generate, Motion, PhantomSpec};
use vesseltrack_core::segmentation::EllipseParams;
use vesseltrack_core::{GrayImage, Point, SeedSource, SequenceConfig};
use vesseltrack_server::{router, AppState, ServerOptions};

fn app() -> (Router, AppState) {
    let state = AppState::new(ServerOptions { default_threads: 2 });
    (router(state.clone()), state)
}

fn small_phantom() -> PhantomSpec {
    PhantomSpec {
        width: 240,
        height: 160,
        frames: 4,
        vessel: EllipseParams::circle(110.0, 80.0, 30.0),
        wall_width: 8.0,
        motion: vec![Motion::Drift { vx: 1.0, vy: 0.0 }],
        ..PhantomSpec::default()
    }
}

fn small_config() -> SequenceConfig {
    SequenceConfig {
        downsample_factor: 2,
        ..SequenceConfig::uhfus()
    }
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn create(app: &Router, config: &SequenceConfig, seed: Point) -> (StatusCode, Value) {
    let req = CreateSequenceRequest {
        config: config.clone(),
        seed,
        threads: None,
    };
    send(app, "POST", "/v1/sequences", Some(serde_json::to_value(req).unwrap())).await
}

async fn push(app: &Router, id: &str, frame: &GrayImage) -> (StatusCode, Value) {
    let body = serde_json::to_value(FramePayload::from_image(frame)).unwrap();
    send(app, "POST", &format!("/v1/sequences/{id}/frames"), Some(body)).await
}

#[tokio::test]
async fn health_reports_ok() {
    let (app, _) = app();
    let (status, body) = send(&app, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
}

#[tokio::test]
async fn session_tracks_a_phantom_and_matches_the_library() {
    let (app, state) = app();
    let spec = small_phantom();
    let (frames, truth) = generate(&spec).unwrap();
    let seed = truth[0].ellipse.center();
    let config = small_config();

    let (status, body) = create(&app, &config, seed).await;
    assert_eq!(status, StatusCode::CREATED);
    let info: SequenceInfo = serde_json::from_value(body).unwrap();
    assert_eq!(info.threads, 2);
    assert_eq!(info.frames_processed, 0);
    assert_eq!(state.session_count(), 1);

    let direct = vesseltrack_core::run_sequence(&frames, seed, &config).unwrap();
    for (i, frame) in frames.iter().enumerate() {
        let (status, body) = push(&app, &info.id, frame).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        let out: PushFrameResponse = serde_json::from_value(body).unwrap();
        assert_eq!(out.frames_processed, i + 1);
        assert_eq!(out.result, direct[i]);
        assert!(out.elapsed_ms > 0.0);
    }
    assert_eq!(direct[0].seed_used, SeedSource::Manual);

    let (_, body) = send(&app, "GET", &format!("/v1/sequences/{}", info.id), None).await;
    let info2: SequenceInfo = serde_json::from_value(body).unwrap();
    assert_eq!(info2.frames_processed, frames.len());
    assert_eq!(info2.dims, Some((spec.width, spec.height)));
    assert!(info2.cluster_kernel.is_some());

    let uri = format!("/v1/sequences/{}", info.id);
    assert_eq!(send(&app, "DELETE", &uri, None).await.0, StatusCode::NO_CONTENT);
    let (status, body) = send(&app, "DELETE", &uri, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_sequence");
    assert_eq!(state.session_count(), 0);
}

#[tokio::test]
async fn frame_errors_map_to_codes() {
    let (app, _) = app();
    let (frames, _) = generate(&small_phantom()).unwrap();

    let (_, body) = create(&app, &small_config(), Point::new(5000.0, 10.0)).await;
    let id = body["id"].as_str().unwrap().to_string();
    let (status, body) = push(&app, &id, &frames[0]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "seed_outside_image");

    let (_, body) = create(&app, &small_config(), Point::new(110.0, 80.0)).await;
    let id = body["id"].as_str().unwrap().to_string();
    assert_eq!(push(&app, &id, &frames[0]).await.0, StatusCode::OK);
    let (status, body) = push(&app, &id, &GrayImage::filled(100, 100, 0.0)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "dimension_mismatch");

    let (status, body) = push(&app, "nope", &frames[0]).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "unknown_sequence");

    let bad = json!({"width": 4, "height": 4, "data": "AAAA"});
    let (status, body) = send(&app, "POST", &format!("/v1/sequences/{id}/frames"), Some(bad)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "parse_error");
}

#[tokio::test]
async fn lost_tracking_is_unprocessable() {
    let (app, _) = app();
    let (frames, truth) = generate(&small_phantom()).unwrap();
    let (_, body) = create(&app, &small_config(), truth[0].ellipse.center()).await;
    let id = body["id"].as_str().unwrap().to_string();
    assert_eq!(push(&app, &id, &frames[0]).await.0, StatusCode::OK);
    let blank = GrayImage::filled(240, 160, 140.0);
    let (status, body) = push(&app, &id, &blank).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "tracking_lost");
}

#[tokio::test]
async fn invalid_requests_are_rejected() {
    let (app, _) = app();
    let config = SequenceConfig {
        downsample_factor: 0,
        ..SequenceConfig::uhfus()
    };
    let (status, body) = create(&app, &config, Point::new(1.0, 1.0)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_parameter");

    let (status, body) = send(&app, "POST", "/v1/sequences", Some(json!({"seed": 3}))).await;
    assert!(status.is_client_error());
    assert_eq!(body["code"], "bad_request");
}

#[tokio::test]
async fn score_of_identical_contours_is_perfect() {
    let (app, _) = app();
    let c = EllipseParams::new(50.0, 40.0, 20.0, 12.0, 0.3).sample(200);
    let req = ScoreRequest {
        truth: vec![c.clone(), c.clone()],
        estimate: vec![c.clone(), c],
        width: 100,
        height: 80,
        pixel_pitch_mm: 0.0116,
    };
    let (status, body) = send(&app, "POST", "/v1/score", Some(serde_json::to_value(req).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ScoreResponse = serde_json::from_value(body).unwrap();
    assert_eq!(resp.frames.len(), 2);
    assert_eq!(resp.summary.dice.mean, 1.0);
    assert_eq!(resp.summary.hausdorff_mm.mean, 0.0);
    assert_eq!(resp.summary.mad_mm.mean, 0.0);

    let mismatched = json!({"truth": [[]], "estimate": [], "width": 10, "height": 10, "pixel_pitch_mm": 1.0});
    let (status, body) = send(&app, "POST", "/v1/score", Some(mismatched)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_parameter");
}

#[tokio::test]
async fn phantom_matches_local_generation() {
    let (app, _) = app();
    let spec = small_phantom();
    let (status, body) = send(&app, "POST", "/v1/phantom", Some(serde_json::to_value(&spec).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    let resp: PhantomResponse = serde_json::from_value(body).unwrap();
    let (frames, truth) = generate(&spec).unwrap();
    assert_eq!(resp.truth, truth);
    let decoded: Vec<GrayImage> = resp.frames.iter().map(|f| f.to_image().unwrap()).collect();
    assert_eq!(decoded, frames);

    let partial = json!({"frames": 2, "width": 400, "height": 300, "vessel": {"cx": 200.0, "cy": 150.0, "a": 30.0, "b": 30.0, "theta": 0.0}});
    let (status, body) = send(&app, "POST", "/v1/phantom", Some(partial)).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["frames"].as_array().unwrap().len(), 2);

    let off = json!({"width": 100, "height": 100});
    let (status, body) = send(&app, "POST", "/v1/phantom", Some(off)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "vessel_out_of_bounds");
}
