//! JSON wire types shared by the HTTP server and its client.
//!
//! Frames travel as base64-encoded 8-bit grayscale, row-major.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::config::SequenceConfig;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};
use crate::metrics::{FrameScore, ScoreSummary};
use crate::pipeline::ContourResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePayload {
    pub width: usize,
    pub height: usize,
    pub data: String,
}

impl FramePayload {
    /// Values are rounded and saturated to 8 bits.
    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            data: STANDARD.encode(img.to_u8()),
        }
    }

    pub fn to_image(&self) -> Result<GrayImage> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::Parse(format!("frame data is not base64: {e}")))?;
        if bytes.len() != self.width * self.height {
            return Err(Error::Parse(format!(
                "frame data has {} bytes, expected {}x{}",
                bytes.len(),
                self.width,
                self.height
            )));
        }
        GrayImage::from_u8(self.width, self.height, &bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSequenceRequest {
    pub config: SequenceConfig,
    pub seed: Point,
    /// Worker threads for this sequence; server default when absent.
    #[serde(default)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceInfo {
    pub id: String,
    pub frames_processed: usize,
    pub dims: Option<(usize, usize)>,
    pub cluster_kernel: Option<usize>,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PushFrameResponse {
    pub result: ContourResult,
    /// Server-side compute time for the frame, excluding transfer and decoding.
    pub elapsed_ms: f64,
    pub frames_processed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub truth: Vec<Vec<Point>>,
    pub estimate: Vec<Vec<Point>>,
    pub width: usize,
    pub height: usize,
    pub pixel_pitch_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub frames: Vec<FrameScore>,
    pub summary: ScoreSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomResponse {
    pub frames: Vec<FramePayload>,
    pub truth: Vec<ContourResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        Self {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}
