//! Single-frame vessel segmentation from a seed point: radial search on the
//! FA map, ellipse fit, shrunken elliptical level set, DRLSE refinement and
//! contour extraction.

pub mod contour;
pub mod ellipse;
pub mod levelset;
pub mod radial;

pub use contour::extract_contour;
pub use ellipse::{fit_ellipse, Conic, EllipseParams};
pub use levelset::{
    drlse_evolve, drlse_evolve_with_edge, edge_indicator, init_lsf, mean_gradient_in_band,
    DrlseParams, LevelSetField,
};
pub use radial::radial_search;

use crate::error::{Error, Result};
use crate::geometry::point_in_polygon;
use crate::image::{GrayImage, Point};

/// Knobs for [`segment`], a subset of the sequence configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentParams {
    pub radial_n: usize,
    pub radial_m: usize,
    pub fa_min: f64,
    pub shrink_factor: f64,
    pub drlse: DrlseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    /// Refined contour in the coordinates of the input images.
    pub contour: Vec<Point>,
    /// Ellipse fitted to the refined contour (the tracker measurement).
    pub ellipse: EllipseParams,
    /// Ellipse fitted to the radial-search boundary points.
    pub initial: EllipseParams,
    pub boundary_points: Vec<Point>,
}

/// Segment one frame. `edge` is the precomputed edge indicator of `img_b`.
pub fn segment_with_edge(
    fa: &GrayImage,
    edge: &GrayImage,
    seed: Point,
    params: &SegmentParams,
) -> Result<Segmentation> {
    let boundary_points = radial_search(fa, seed, params.radial_n, params.radial_m, params.fa_min)?;
    let initial = fit_ellipse(&boundary_points)?;
    let phi0 = init_lsf(&initial, params.shrink_factor, fa.dims(), params.drlse.c0)?;
    let phi = drlse_evolve_with_edge(&phi0, edge, &params.drlse)?;
    let contour = extract_contour(&phi)?;
    if !point_in_polygon(&contour, seed) {
        return Err(Error::DegenerateConfiguration(
            "refined contour does not enclose the seed".into(),
        ));
    }
    let ellipse = fit_ellipse(&contour)?;
    Ok(Segmentation {
        contour,
        ellipse,
        initial,
        boundary_points,
    })
}

pub fn segment(
    fa: &GrayImage,
    img_b: &GrayImage,
    seed: Point,
    params: &SegmentParams,
) -> Result<Segmentation> {
    fa.ensure_same_dims(img_b)?;
    let edge = edge_indicator(img_b, params.drlse.edge_sigma);
    segment_with_edge(fa, &edge, seed, params)
}
