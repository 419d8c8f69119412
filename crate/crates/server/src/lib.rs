//! HTTP/JSON front end for `vesseltrack-core`.
//!
//! A tracking session owns one [`SequenceTracker`] and a private rayon pool.
//! Frames are pushed one at a time; each push runs on the blocking thread
//! pool so the async runtime never waits on numerics.
//!
//! Routes:
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | `HealthResponse` |
//! | POST | `/v1/sequences` | `CreateSequenceRequest` | `SequenceInfo` (201) |
//! | GET | `/v1/sequences/{id}` | | `SequenceInfo` |
//! | POST | `/v1/sequences/{id}/frames` | `FramePayload` | `PushFrameResponse` |
//! | DELETE | `/v1/sequences/{id}` | | 204 |
//! | POST | `/v1/score` | `ScoreRequest` | `ScoreResponse` |
//! | POST | `/v1/phantom` | `PhantomSpec` | `PhantomResponse` |
//!
//! Failures reply with an `ErrorBody` carrying a stable `code`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rayon::prelude::*;
use tokio::net::TcpListener;

use vesseltrack_core::api::{
    CreateSequenceRequest, ErrorBody, FramePayload, HealthResponse, PhantomResponse,
    PushFrameResponse, ScoreRequest, ScoreResponse, SequenceInfo,
};
use vesseltrack_core::metrics::{score_sequence, summarize};
use vesseltrack_core::phantom::{generate, PhantomSpec};
use vesseltrack_core::{Error, SequenceTracker};

/// Request bodies carry whole frames; 512 MiB covers a long 832×512 phantom.
pub const BODY_LIMIT: usize = 512 << 20;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    /// Default worker threads per session; 0 means all cores.
    pub default_threads: usize,
}

impl Default for ServerOptions {
    fn default() -> Self {
        Self { default_threads: 0 }
    }
}

struct Session {
    tracker: SequenceTracker,
    pool: rayon::ThreadPool,
}

impl Session {
    fn info(&self, id: &str) -> SequenceInfo {
        SequenceInfo {
            id: id.to_string(),
            frames_processed: self.tracker.frames_processed(),
            dims: self.tracker.dims(),
            cluster_kernel: self.tracker.cluster_kernel(),
            threads: self.pool.current_num_threads(),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Arc<Mutex<Session>>>>>,
    options: ServerOptions,
}

impl AppState {
    pub fn new(options: ServerOptions) -> Self {
        Self {
            sessions: Arc::default(),
            options,
        }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().unwrap().len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_sequence(id))
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn unknown_sequence(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_sequence", format!("no sequence with id {id}"))
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

/// HTTP status for a core error.
pub fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::DimensionMismatch { .. } | Error::MixedDimensions { .. } => StatusCode::CONFLICT,
        Error::TrackingLost { .. }
        | Error::TooFewBoundaryPoints { .. }
        | Error::TooFewPoints(_)
        | Error::DegenerateConfiguration(_)
        | Error::EllipseTooSmall { .. }
        | Error::NumericalBlowup { .. }
        | Error::NoZeroCrossing
        | Error::SingularInnovation
        | Error::NoRootsInRegion
        | Error::SelfIntersectingContour
        | Error::BothEmpty
        | Error::EmptyContour
        | Error::EmptyMask => StatusCode::UNPROCESSABLE_ENTITY,
        Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        _ => StatusCode::BAD_REQUEST,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self {
            status: status_for(&e),
            body: ErrorBody::from(&e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(r.status(), "bad_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Run a CPU-bound closure off the async runtime.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<HealthResponse> {
    Json(HealthResponse {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn create_sequence(
    State(state): State<AppState>,
    body: Result<Json<CreateSequenceRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<SequenceInfo>)> {
    let Json(req) = body?;
    let threads = req.threads.unwrap_or(state.options.default_threads);
    let tracker = SequenceTracker::new(req.config, req.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| ApiError::internal(format!("cannot start worker pool: {e}")))?;
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session { tracker, pool };
    let info = session.info(&id);
    state
        .sessions
        .lock()
        .unwrap()
        .insert(id.clone(), Arc::new(Mutex::new(session)));
    tracing::info!(%id, threads = info.threads, "sequence created");
    Ok((StatusCode::CREATED, Json(info)))
}

async fn sequence_info(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Json<SequenceInfo>> {
    let session = state.session(&id)?;
    let info = session.lock().unwrap().info(&id);
    Ok(Json(info))
}

async fn push_frame(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FramePayload>, JsonRejection>,
) -> ApiResult<Json<PushFrameResponse>> {
    let Json(payload) = body?;
    let session = state.session(&id)?;
    blocking(move || {
        let frame = payload.to_image()?;
        let mut guard = session.lock().unwrap();
        let s = &mut *guard;
        let out = s.pool.install(|| s.tracker.push_frame(&frame))?;
        Ok(Json(PushFrameResponse {
            result: out.result,
            elapsed_ms: out.elapsed.as_secs_f64() * 1e3,
            frames_processed: s.tracker.frames_processed(),
        }))
    })
    .await
}

async fn delete_sequence(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    match state.sessions.lock().unwrap().remove(&id) {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::unknown_sequence(&id)),
    }
}

async fn score(body: Result<Json<ScoreRequest>, JsonRejection>) -> ApiResult<Json<ScoreResponse>> {
    let Json(req) = body?;
    blocking(move || {
        let frames = score_sequence(
            &req.truth,
            &req.estimate,
            (req.width, req.height),
            req.pixel_pitch_mm,
        )?;
        let summary = summarize(&frames);
        Ok(Json(ScoreResponse { frames, summary }))
    })
    .await
}

async fn phantom(body: Result<Json<PhantomSpec>, JsonRejection>) -> ApiResult<Json<PhantomResponse>> {
    let Json(spec) = body?;
    blocking(move || {
        let t0 = Instant::now();
        let (frames, truth) = generate(&spec)?;
        let frames = frames.par_iter().map(FramePayload::from_image).collect();
        tracing::info!(frames = spec.frames, elapsed_ms = t0.elapsed().as_millis() as u64, "phantom generated");
        Ok(Json(PhantomResponse { frames, truth }))
    })
    .await
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/sequences", post(create_sequence))
        .route("/v1/sequences/{id}", get(sequence_info).delete(delete_sequence))
        .route("/v1/sequences/{id}/frames", post(push_frame))
        .route("/v1/score", post(score))
        .route("/v1/phantom", post(phantom))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Serve until the future `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    options: ServerOptions,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(AppState::new(options)))
        .with_graceful_shutdown(shutdown)
        .await
}
