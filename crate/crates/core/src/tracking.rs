//! Frame-to-frame seed propagation.
//!
//! The filter state is `[cx, cy, a, b]` with a damped second-order motion
//! model `x⁺ = A1·x + A2·x_prev`. Two candidate seeds are produced each
//! frame, one from the filter prediction and one from the darkest cluster
//! root near the previous cluster seed; the cluster seed wins only when the
//! two disagree by more than the predicted semi-major axis.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Point;
use crate::preprocess::ClusterMap;
use crate::image::GrayImage;
use crate::segmentation::{segment_with_edge, EllipseParams, SegmentParams, Segmentation};

pub type StateVector = Vector4<f64>;
pub type Covariance = Matrix4<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EkfParams {
    pub a1: Covariance,
    pub a2: Covariance,
    pub p0: Covariance,
    pub q: Covariance,
    pub r: Covariance,
}

impl Default for EkfParams {
    fn default() -> Self {
        Self {
            a1: Matrix4::from_diagonal_element(1.5),
            a2: Matrix4::from_diagonal_element(-0.5),
            p0: Matrix4::from_diagonal_element(1000.0),
            q: Matrix4::from_diagonal_element(0.001),
            r: Matrix4::from_diagonal_element(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedSource {
    Ekf,
    Cluster,
    Manual,
}

impl SeedSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SeedSource::Ekf => "ekf",
            SeedSource::Cluster => "cluster",
            SeedSource::Manual => "manual",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ekf" => Some(SeedSource::Ekf),
            "cluster" => Some(SeedSource::Cluster),
            "manual" => Some(SeedSource::Manual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub x: StateVector,
    pub x_prev: StateVector,
    pub p: Covariance,
    /// Seed used for the most recent frame.
    pub seed: Point,
    pub seed_source: SeedSource,
    /// Cluster-tracked lumen root `s_c`, followed independently of `seed`.
    pub cluster_seed: Point,
}

pub fn state_from_ellipse(e: &EllipseParams) -> StateVector {
    Vector4::new(e.cx, e.cy, e.a, e.b)
}

impl TrackerState {
    /// Stationary start: the previous state equals the first measurement.
    pub fn from_first_frame(ellipse: &EllipseParams, seed: Point, params: &EkfParams) -> Self {
        let x = state_from_ellipse(ellipse);
        Self {
            x,
            x_prev: x,
            p: params.p0,
            seed,
            seed_source: SeedSource::Manual,
            cluster_seed: ellipse.center(),
        }
    }
}

pub fn ekf_predict(state: &TrackerState, params: &EkfParams) -> (StateVector, Covariance) {
    let x_pred = params.a1 * state.x + params.a2 * state.x_prev;
    let p_pred = params.a1 * state.p * params.a1.transpose() + params.q;
    (x_pred, p_pred)
}

/// Kalman correction with an identity observation model.
///
/// The returned state keeps the caller's seed fields; `x_prev` becomes the
/// state before this update.
pub fn ekf_update(
    state: &TrackerState,
    x_pred: &StateVector,
    p_pred: &Covariance,
    z: &StateVector,
    params: &EkfParams,
) -> Result<TrackerState> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("measurement is not finite".into()));
    }
    if !(z[2] >= z[3] && z[3] > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "measurement axes must satisfy a >= b > 0 (got a={}, b={})",
            z[2], z[3]
        )));
    }
    let s = p_pred + params.r;
    let s_inv = s
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or(Error::SingularInnovation)?;
    let k = p_pred * s_inv;
    let x_new = x_pred + k * (z - x_pred);
    let p_new = (Matrix4::identity() - k) * p_pred;
    let p_new = 0.5 * (p_new + p_new.transpose());
    Ok(TrackerState {
        x: x_new,
        x_prev: state.x,
        p: p_new,
        ..state.clone()
    })
}

/// Darkest root inside the axis-aligned ellipse of semi-axes
/// `(1.5·a_pred, b_pred)` around `prev_seed` (boundary inclusive). Ties go
/// to the root nearer `prev_seed`, then to the lower row-major index.
pub fn cluster_seed_search(
    cmap: &ClusterMap,
    prev_seed: Point,
    a_pred: f64,
    b_pred: f64,
) -> Result<Point> {
    if !(a_pred > 0.0 && b_pred > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "search axes must be positive (got {a_pred}, {b_pred})"
        )));
    }
    let w = cmap.width as f64;
    let h = cmap.height as f64;
    if !(prev_seed.x >= 0.0 && prev_seed.y >= 0.0 && prev_seed.x <= w - 1.0 && prev_seed.y <= h - 1.0)
    {
        return Err(Error::SeedOutsideImage {
            x: prev_seed.x,
            y: prev_seed.y,
            width: cmap.width,
            height: cmap.height,
        });
    }
    let ra = 1.5 * a_pred;
    let rb = b_pred;
    let mut best: Option<(f64, f64, usize, Point)> = None;
    for (k, &root) in cmap.roots.iter().enumerate() {
        let p = cmap.root_point(k);
        let u = (p.x - prev_seed.x) / ra;
        let v = (p.y - prev_seed.y) / rb;
        if u * u + v * v > 1.0 {
            continue;
        }
        let mean = cmap.patch_mean[k];
        let dist = p.distance_squared(prev_seed);
        let better = match best {
            None => true,
            Some((bm, bd, bi, _)) => {
                mean < bm || (mean == bm && (dist < bd || (dist == bd && root < bi)))
            }
        };
        if better {
            best = Some((mean, dist, root, p));
        }
    }
    best.map(|(_, _, _, p)| p).ok_or(Error::NoRootsInRegion)
}

/// Pick the cluster seed when it is farther than `a_pred` from the filter
/// seed, otherwise the filter seed.
pub fn select_seed(s_ekf: Point, s_c: Point, a_pred: f64) -> (Point, SeedSource) {
    if s_ekf.distance(s_c) > a_pred {
        (s_c, SeedSource::Cluster)
    } else {
        (s_ekf, SeedSource::Ekf)
    }
}

/// Smallest eigenvalue of the symmetric part of `p`.
pub fn min_eigenvalue(p: &Covariance) -> f64 {
    let sym = 0.5 * (p + p.transpose());
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of one tracked frame.
#[derive(Debug, Clone)]
pub struct TrackStep {
    pub state: TrackerState,
    pub segmentation: Segmentation,
    pub seed: Point,
    pub seed_source: SeedSource,
    pub s_ekf: Point,
    /// `None` when no root was found in the search region.
    pub s_c: Option<Point>,
}

fn clamp_to(p: Point, w: usize, h: usize) -> Point {
    Point::new(p.x.clamp(0.0, (w - 1) as f64), p.y.clamp(0.0, (h - 1) as f64))
}

/// Predict, pick a seed by the switching rule, segment, and correct.
///
/// If segmentation from the chosen seed fails, the other candidate is tried
/// once. `TrackingLost` is returned when no candidate yields a contour.
pub fn track_frame(
    state: &TrackerState,
    cmap: &ClusterMap,
    fa: &GrayImage,
    edge: &GrayImage,
    segment: &SegmentParams,
    ekf: &EkfParams,
    frame: usize,
) -> Result<TrackStep> {
    let (w, h) = fa.dims();
    if (cmap.width, cmap.height) != (w, h) {
        return Err(Error::DimensionMismatch {
            expected: (w, h),
            got: (cmap.width, cmap.height),
        });
    }
    let (x_pred, p_pred) = ekf_predict(state, ekf);
    // a non-physical prediction falls back to the current axes
    let (a_pred, b_pred) = if x_pred[2] > 0.0 && x_pred[3] > 0.0 {
        (x_pred[2].max(x_pred[3]), x_pred[2].min(x_pred[3]))
    } else {
        (state.x[2], state.x[3])
    };
    let s_ekf = clamp_to(Point::new(x_pred[0], x_pred[1]), w, h);
    let prev_c = clamp_to(state.cluster_seed, w, h);
    let s_c = match cluster_seed_search(cmap, prev_c, a_pred, b_pred) {
        Ok(p) => Some(p),
        Err(Error::NoRootsInRegion) => None,
        Err(e) => return Err(e),
    };

    let mut candidates = Vec::with_capacity(2);
    match s_c {
        Some(c) => {
            let (first, src) = select_seed(s_ekf, c, a_pred);
            candidates.push((first, src));
            match src {
                SeedSource::Cluster => candidates.push((s_ekf, SeedSource::Ekf)),
                _ if c != s_ekf => candidates.push((c, SeedSource::Cluster)),
                _ => {}
            }
        }
        None => candidates.push((s_ekf, SeedSource::Ekf)),
    }

    let mut reasons = Vec::new();
    for (seed, source) in candidates {
        let seg = match segment_with_edge(fa, edge, seed, segment) {
            Ok(seg) => seg,
            Err(e) => {
                reasons.push(format!("{} seed ({:.1}, {:.1}): {e}", source.as_str(), seed.x, seed.y));
                continue;
            }
        };
        let z = state_from_ellipse(&seg.ellipse);
        let mut next = match ekf_update(state, &x_pred, &p_pred, &z, ekf) {
            Ok(n) => n,
            Err(e) => {
                reasons.push(format!("{} seed: {e}", source.as_str()));
                continue;
            }
        };
        next.seed = seed;
        next.seed_source = source;
        next.cluster_seed = s_c.unwrap_or(seg.ellipse.center());
        return Ok(TrackStep {
            state: next,
            segmentation: seg,
            seed,
            seed_source: source,
            s_ekf,
            s_c,
        });
    }
    if s_c.is_none() {
        reasons.push("no cluster roots in the search region".into());
    }
    Err(Error::TrackingLost {
        frame,
        reason: reasons.join("; "),
    })
}
