use reqwest::StatusCode;
use tokio::net::TcpListener;

use vesseltrack_client::{Client, ClientError};
use vesseltrack_core::api::ScoreRequest;
use vesseltrack_core::phantom::{generate, Motion, PhantomSpec};
use vesseltrack_core::segmentation::EllipseParams;
use vesseltrack_core::{GrayImage, Point, SequenceConfig};
use vesseltrack_server::{serve, ServerOptions};

async fn spawn_server() -> Client {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(serve(listener, ServerOptions::default(), std::future::pending()));
    Client::new(format!("http://{addr}/"))
}

fn spec() -> PhantomSpec {
    PhantomSpec {
        width: 240,
        height: 160,
        frames: 3,
        vessel: EllipseParams::circle(110.0, 80.0, 30.0),
        wall_width: 8.0,
        motion: vec![Motion::Drift { vx: 1.0, vy: 0.0 }],
        rng_seed: 11,
        ..PhantomSpec::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn phantom_track_and_score_through_the_client() {
    let client = spawn_server().await;
    assert_eq!(client.health().await.unwrap().status, "ok");
    assert!(!client.base_url().ends_with('/'));

    let ph = client.phantom(&spec()).await.unwrap();
    let frames: Vec<GrayImage> = ph.frames.iter().map(|f| f.to_image().unwrap()).collect();
    assert_eq!(frames, generate(&spec()).unwrap().0);

    let config = SequenceConfig {
        downsample_factor: 2,
        ..SequenceConfig::uhfus()
    };
    let seq = client
        .create_sequence(&config, ph.truth[0].ellipse.center(), Some(1))
        .await
        .unwrap();
    assert_eq!(seq.info().threads, 1);
    let mut estimate = Vec::new();
    for f in &frames {
        estimate.push(seq.push(f).await.unwrap().result.points);
    }
    assert_eq!(seq.refresh().await.unwrap().frames_processed, 3);

    let score = client
        .score(&ScoreRequest {
            truth: ph.truth.iter().map(|t| t.points.clone()).collect(),
            estimate,
            width: 240,
            height: 160,
            pixel_pitch_mm: config.pixel_pitch_mm,
        })
        .await
        .unwrap();
    assert!(score.summary.dice.mean > 0.85, "{:?}", score.summary);

    let id = seq.id().to_string();
    seq.close().await.unwrap();
    let err = client.sequence_info(&id).await.unwrap_err();
    assert_eq!(err.code(), Some("unknown_sequence"));
}

#[tokio::test]
async fn api_errors_carry_status_and_code() {
    let client = spawn_server().await;
    let seq = client
        .create_sequence(&SequenceConfig::uhfus(), Point::new(1e6, 0.0), None)
        .await
        .unwrap();
    match seq.push(&GrayImage::filled(64, 64, 10.0)).await {
        Err(ClientError::Api { status, code, message }) => {
            assert_eq!(status, StatusCode::BAD_REQUEST);
            assert_eq!(code, "seed_outside_image");
            assert!(message.contains("outside"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}")).health().await.unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)));
    assert_eq!(err.code(), None);
}
