use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};

/// Minimum number of boundary points a search must return.
pub const MIN_BOUNDARY_POINTS: usize = 5;

/// Cast `n` equally spaced rays from `seed` and keep, per ray, the first
/// sample that is a strict local maximum of the FA profile with value at
/// least `fa_min`. Rays are sampled at 1 px steps up to `m` px.
///
/// Points come back in increasing ray angle.
pub fn radial_search(
    fa: &GrayImage,
    seed: Point,
    n: usize,
    m: usize,
    fa_min: f64,
) -> Result<Vec<Point>> {
    if !fa.contains(seed) {
        return Err(Error::SeedOutsideImage {
            x: seed.x,
            y: seed.y,
            width: fa.width(),
            height: fa.height(),
        });
    }
    if n < 8 {
        return Err(Error::InvalidParameter(format!("need at least 8 rays, got {n}")));
    }
    let mut out = Vec::with_capacity(n);
    let mut profile = Vec::with_capacity(m + 1);
    for k in 0..n {
        let angle = 2.0 * PI * k as f64 / n as f64;
        let (s, c) = angle.sin_cos();
        profile.clear();
        for r in 0..=m {
            let p = Point::new(seed.x + r as f64 * c, seed.y + r as f64 * s);
            match fa.sample_bilinear(p) {
                Some(v) => profile.push(v),
                None => break,
            }
        }
        let hit = (1..profile.len().saturating_sub(1)).find(|&r| {
            profile[r] > profile[r - 1] && profile[r] > profile[r + 1] && profile[r] >= fa_min
        });
        if let Some(r) = hit {
            out.push(Point::new(seed.x + r as f64 * c, seed.y + r as f64 * s));
        }
    }
    if out.len() < MIN_BOUNDARY_POINTS {
        return Err(Error::TooFewBoundaryPoints { found: out.len() });
    }
    Ok(out)
}
