//! Per-frame orchestration: downsample, bilateral, clustering and phase in
//! parallel, then segmentation (frame 0) or tracking (later frames).
//!
//! All processing runs on the downsampled grid. Pixel `i` of that grid is
//! the mean of full-resolution pixels `f·i .. f·i + f - 1`, so its center
//! maps to `f·i + (f - 1)/2` at full resolution.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::SequenceConfig;
use crate::error::{Error, Result};
use crate::image::{GrayImage, Point, MIN_PIPELINE_DIM};
use crate::phase::fa_map;
use crate::preprocess::{bilateral_filter, cluster, downsample, ClusterMap};
use crate::segmentation::{edge_indicator, segment_with_edge, EllipseParams};
use crate::tracking::{track_frame, SeedSource, TrackerState};

/// Segmented vessel boundary of one frame, at full resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourResult {
    pub frame_index: usize,
    pub points: Vec<Point>,
    pub ellipse: EllipseParams,
    pub seed: Point,
    pub seed_used: SeedSource,
}

/// Maps between full-resolution and downsampled pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoordMap {
    pub factor: usize,
}

impl CoordMap {
    fn offset(&self) -> f64 {
        (self.factor as f64 - 1.0) / 2.0
    }

    pub fn to_full(&self, p: Point) -> Point {
        let f = self.factor as f64;
        Point::new(p.x * f + self.offset(), p.y * f + self.offset())
    }

    pub fn to_down(&self, p: Point) -> Point {
        let f = self.factor as f64;
        Point::new((p.x - self.offset()) / f, (p.y - self.offset()) / f)
    }

    pub fn ellipse_to_full(&self, e: &EllipseParams) -> EllipseParams {
        let f = self.factor as f64;
        let c = self.to_full(e.center());
        EllipseParams {
            cx: c.x,
            cy: c.y,
            a: e.a * f,
            b: e.b * f,
            theta: e.theta,
        }
    }
}

/// Intermediate images of one frame, on the downsampled grid.
#[derive(Debug, Clone)]
pub struct FrameProducts {
    pub img_b: GrayImage,
    pub fa: GrayImage,
    pub edge: GrayImage,
    pub cmap: Option<ClusterMap>,
}

/// Run the per-frame stages. Clustering is skipped when `cluster_kernel`
/// is `None`.
pub fn process_frame(
    frame: &GrayImage,
    config: &SequenceConfig,
    cluster_kernel: Option<usize>,
) -> Result<FrameProducts> {
    let small = downsample(frame, config.downsample_factor)?;
    small.ensure_min_dims(MIN_PIPELINE_DIM)?;
    let img_b = bilateral_filter(
        &small,
        config.bilateral_kernel,
        config.bilateral_sigma_spatial,
        config.bilateral_sigma_range,
    )?;
    let (cmap, (fa, edge)) = rayon::join(
        || cluster_kernel.map(|k| cluster(&img_b, k)).transpose(),
        || {
            rayon::join(
                || fa_map(&img_b, &config.cauchy, &config.fa),
                || edge_indicator(&img_b, config.drlse.edge_sigma),
            )
        },
    );
    Ok(FrameProducts {
        cmap: cmap?,
        fa: fa?,
        edge,
        img_b,
    })
}

/// Output of [`SequenceTracker::push_frame`].
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub result: ContourResult,
    /// Compute time of the frame, excluding any I/O by the caller.
    pub elapsed: Duration,
}

/// Incremental tracker for one sequence. Frames must be pushed in order.
#[derive(Debug, Clone)]
pub struct SequenceTracker {
    config: SequenceConfig,
    coords: CoordMap,
    seed: Point,
    dims: Option<(usize, usize)>,
    state: Option<TrackerState>,
    kernel: Option<usize>,
    next_frame: usize,
}

impl SequenceTracker {
    /// `seed` is a full-resolution point inside the lumen of frame 0.
    pub fn new(config: SequenceConfig, seed: Point) -> Result<Self> {
        config.validate()?;
        if !(seed.x.is_finite() && seed.y.is_finite()) {
            return Err(Error::InvalidParameter("seed must be finite".into()));
        }
        Ok(Self {
            coords: CoordMap {
                factor: config.downsample_factor,
            },
            config,
            seed,
            dims: None,
            state: None,
            kernel: None,
            next_frame: 0,
        })
    }

    pub fn config(&self) -> &SequenceConfig {
        &self.config
    }

    pub fn frames_processed(&self) -> usize {
        self.next_frame
    }

    pub fn state(&self) -> Option<&TrackerState> {
        self.state.as_ref()
    }

    /// Clustering window in use, fixed after frame 0.
    pub fn cluster_kernel(&self) -> Option<usize> {
        self.kernel
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    fn ellipse_result(&self, e: &EllipseParams) -> EllipseParams {
        self.coords.ellipse_to_full(e)
    }

    pub fn push_frame(&mut self, frame: &GrayImage) -> Result<FrameOutput> {
        let start = Instant::now();
        let t = self.next_frame;
        match self.dims {
            None => {
                let (w, h) = frame.dims();
                let s = self.seed;
                if !(s.x >= 0.0 && s.y >= 0.0 && s.x <= (w - 1) as f64 && s.y <= (h - 1) as f64) {
                    return Err(Error::SeedOutsideImage {
                        x: s.x,
                        y: s.y,
                        width: w,
                        height: h,
                    });
                }
            }
            Some(d) if d != frame.dims() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: frame.dims(),
                });
            }
            Some(_) => {}
        }

        let params = self.config.segment_params();
        let lost = |e: Error| match e {
            Error::TrackingLost { .. } => e,
            other => Error::TrackingLost {
                frame: t,
                reason: other.to_string(),
            },
        };
        let result = match &self.state {
            None => {
                let fp = process_frame(frame, &self.config, None)?;
                let (dw, dh) = fp.fa.dims();
                let p = self.coords.to_down(self.seed);
                let seed_d = Point::new(p.x.clamp(0.0, (dw - 1) as f64), p.y.clamp(0.0, (dh - 1) as f64));
                let seg = segment_with_edge(&fp.fa, &fp.edge, seed_d, &params).map_err(lost)?;
                let diameter = 2.0 * seg.ellipse.a * self.config.downsample_factor as f64;
                self.kernel = Some(self.config.cluster_kernel_for(diameter));
                self.state = Some(TrackerState::from_first_frame(&seg.ellipse, seed_d, &self.config.ekf));
                ContourResult {
                    frame_index: t,
                    points: seg.contour.iter().map(|&q| self.coords.to_full(q)).collect(),
                    ellipse: self.ellipse_result(&seg.ellipse),
                    seed: self.seed,
                    seed_used: SeedSource::Manual,
                }
            }
            Some(state) => {
                let fp = process_frame(frame, &self.config, self.kernel)?;
                let cmap = fp.cmap.as_ref().expect("kernel fixed after frame 0");
                let step = track_frame(
                    state,
                    cmap,
                    &fp.fa,
                    &fp.edge,
                    &params,
                    &self.config.ekf,
                    t,
                )?;
                let out = ContourResult {
                    frame_index: t,
                    points: step
                        .segmentation
                        .contour
                        .iter()
                        .map(|&q| self.coords.to_full(q))
                        .collect(),
                    ellipse: self.ellipse_result(&step.segmentation.ellipse),
                    seed: self.coords.to_full(step.seed),
                    seed_used: step.seed_source,
                };
                self.state = Some(step.state);
                out
            }
        };
        self.dims = Some(frame.dims());
        self.next_frame += 1;
        Ok(FrameOutput {
            result,
            elapsed: start.elapsed(),
        })
    }
}

/// Segment frame 0 from `seed` and track through the remaining frames.
pub fn run_sequence(
    frames: &[GrayImage],
    seed: Point,
    config: &SequenceConfig,
) -> Result<Vec<ContourResult>> {
    Ok(run_sequence_timed(frames, seed, config)?
        .into_iter()
        .map(|o| o.result)
        .collect())
}

pub fn run_sequence_timed(
    frames: &[GrayImage],
    seed: Point,
    config: &SequenceConfig,
) -> Result<Vec<FrameOutput>> {
    if let Some(first) = frames.first() {
        for f in frames {
            first.ensure_same_dims(f)?;
        }
    }
    let mut tracker = SequenceTracker::new(config.clone(), seed)?;
    frames.iter().map(|f| tracker.push_frame(f)).collect()
}
