//! Thin async client for the vesseltrack HTTP service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use vesseltrack_core::api::{
    CreateSequenceRequest, ErrorBody, FramePayload, HealthResponse, PhantomResponse,
    PushFrameResponse, ScoreRequest, ScoreResponse, SequenceInfo,
};
use vesseltrack_core::phantom::PhantomSpec;
use vesseltrack_core::{GrayImage, Point, SequenceConfig};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The server could not be reached or the reply was not understood.
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
    /// The server answered with an error body.
    #[error("{message} ({code}, HTTP {status})")]
    Api {
        status: StatusCode,
        code: String,
        message: String,
    },
}

impl ClientError {
    /// Server-side error code, if the server replied.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            ClientError::Transport(_) => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize + ?Sized, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = check(req.send().await?).await?;
        Ok(resp.json().await?)
    }

    pub async fn health(&self) -> Result<HealthResponse> {
        self.call::<(), _>(Method::GET, "/health", None).await
    }

    pub async fn create_sequence(
        &self,
        config: &SequenceConfig,
        seed: Point,
        threads: Option<usize>,
    ) -> Result<Sequence> {
        let req = CreateSequenceRequest {
            config: config.clone(),
            seed,
            threads,
        };
        let info: SequenceInfo = self.call(Method::POST, "/v1/sequences", Some(&req)).await?;
        Ok(Sequence {
            client: self.clone(),
            info,
        })
    }

    pub async fn sequence_info(&self, id: &str) -> Result<SequenceInfo> {
        self.call::<(), _>(Method::GET, &format!("/v1/sequences/{id}"), None)
            .await
    }

    pub async fn push_frame(&self, id: &str, frame: &GrayImage) -> Result<PushFrameResponse> {
        let payload = FramePayload::from_image(frame);
        self.call(Method::POST, &format!("/v1/sequences/{id}/frames"), Some(&payload))
            .await
    }

    pub async fn delete_sequence(&self, id: &str) -> Result<()> {
        let url = format!("{}/v1/sequences/{id}", self.base);
        check(self.http.delete(url).send().await?).await?;
        Ok(())
    }

    pub async fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        self.call(Method::POST, "/v1/score", Some(req)).await
    }

    pub async fn phantom(&self, spec: &PhantomSpec) -> Result<PhantomResponse> {
        self.call(Method::POST, "/v1/phantom", Some(spec)).await
    }
}

async fn check(resp: reqwest::Response) -> Result<reqwest::Response> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    let text = resp.text().await.unwrap_or_default();
    let body = serde_json::from_str::<ErrorBody>(&text).unwrap_or(ErrorBody {
        code: "http_error".into(),
        message: if text.is_empty() {
            status.to_string()
        } else {
            text
        },
    });
    Err(ClientError::Api {
        status,
        code: body.code,
        message: body.message,
    })
}

/// Handle to a server-side tracking session.
#[derive(Debug, Clone)]
pub struct Sequence {
    client: Client,
    info: SequenceInfo,
}

impl Sequence {
    pub fn id(&self) -> &str {
        &self.info.id
    }

    /// Session details as of creation.
    pub fn info(&self) -> &SequenceInfo {
        &self.info
    }

    pub async fn push(&self, frame: &GrayImage) -> Result<PushFrameResponse> {
        self.client.push_frame(&self.info.id, frame).await
    }

    pub async fn refresh(&self) -> Result<SequenceInfo> {
        self.client.sequence_info(&self.info.id).await
    }

    pub async fn close(self) -> Result<()> {
        self.client.delete_sequence(&self.info.id).await
    }
}
