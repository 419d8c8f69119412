//! Region and contour accuracy metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{is_simple, resample_closed};
use crate::image::{GrayImage, Point};

/// Binary membership raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionMask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl RegionMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn inverted(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                got: other.dims(),
            });
        }
        Ok(())
    }
}

const LATTICE_TOL: f64 = 1e-9;

/// Marks lattice points lying on segment `a`–`b`.
fn mark_segment(mask: &mut RegionMask, a: Point, b: Point) {
    let (w, h) = (mask.width as i64, mask.height as i64);
    let mut put = |x: f64, y: f64| {
        let (xi, yi) = (x.round(), y.round());
        if (x - xi).abs() <= LATTICE_TOL && (y - yi).abs() <= LATTICE_TOL {
            let (xi, yi) = (xi as i64, yi as i64);
            if xi >= 0 && yi >= 0 && xi < w && yi < h {
                mask.bits[(yi * w + xi) as usize] = true;
            }
        }
    };
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    if dx.abs() >= dy.abs() {
        if dx == 0.0 {
            put(a.x, a.y);
            return;
        }
        let (lo, hi) = (a.x.min(b.x), a.x.max(b.x));
        let mut x = (lo - LATTICE_TOL).ceil();
        while x <= hi + LATTICE_TOL {
            let y = a.y + (x - a.x) * dy / dx;
            put(x, y);
            x += 1.0;
        }
    } else {
        let (lo, hi) = (a.y.min(b.y), a.y.max(b.y));
        let mut y = (lo - LATTICE_TOL).ceil();
        while y <= hi + LATTICE_TOL {
            let x = a.x + (y - a.y) * dx / dy;
            put(x, y);
            y += 1.0;
        }
    }
}

/// Scanline fill of a simple polygon. A pixel is set when its center is
/// inside the polygon or on its boundary.
pub fn rasterize(contour: &[Point], dims: (usize, usize)) -> Result<RegionMask> {
    if !is_simple(contour) {
        return Err(Error::SelfIntersectingContour);
    }
    let (w, h) = dims;
    let mut mask = RegionMask::empty(w, h);
    let n = contour.len();
    let mut xs = Vec::new();
    for y in 0..h {
        let yf = y as f64;
        xs.clear();
        for i in 0..n {
            let a = contour[i];
            let b = contour[(i + 1) % n];
            if (a.y > yf) != (b.y > yf) {
                xs.push(a.x + (yf - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        // a center is inside iff an odd number of crossings lie at or left of it
        for pair in xs.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0);
            let hi_excl = pair[1];
            let mut x = lo;
            while x < hi_excl && x < w as f64 {
                mask.bits[y * w + x as usize] = true;
                x += 1.0;
            }
        }
    }
    for i in 0..n {
        mark_segment(&mut mask, contour[i], contour[(i + 1) % n]);
    }
    Ok(mask)
}

pub fn dice(g: &RegionMask, s: &RegionMask) -> Result<f64> {
    g.ensure_same_dims(s)?;
    let (mut inter, mut ng, mut ns) = (0usize, 0usize, 0usize);
    for (&a, &b) in g.bits.iter().zip(&s.bits) {
        ng += a as usize;
        ns += b as usize;
        inter += (a && b) as usize;
    }
    if ng + ns == 0 {
        return Err(Error::BothEmpty);
    }
    Ok(2.0 * inter as f64 / (ng + ns) as f64)
}

/// Distance from every point of `from` to its nearest point in `to`.
fn nearest_distances(from: &[Point], to: &[Point]) -> Vec<f64> {
    from.par_iter()
        .map(|&p| {
            to.iter()
                .map(|&q| p.distance_squared(q))
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .collect()
}

fn check_pitch(pitch: f64) -> Result<()> {
    if pitch > 0.0 && pitch.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pixel pitch must be positive, got {pitch}")))
    }
}

/// Symmetric Hausdorff distance between two point sets, in pixels.
pub fn hausdorff_points(g: &[Point], s: &[Point]) -> Result<f64> {
    if g.is_empty() || s.is_empty() {
        return Err(Error::EmptyContour);
    }
    let dg = nearest_distances(g, s).into_iter().fold(0.0, f64::max);
    let ds = nearest_distances(s, g).into_iter().fold(0.0, f64::max);
    Ok(dg.max(ds))
}

/// Symmetric mean nearest-point distance between two point sets, in pixels.
pub fn mad_points(g: &[Point], s: &[Point]) -> Result<f64> {
    if g.is_empty() || s.is_empty() {
        return Err(Error::EmptyContour);
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(0.5 * (mean(nearest_distances(g, s)) + mean(nearest_distances(s, g))))
}

/// Contour vertices resampled to unit arc-length spacing.
pub fn unit_resample(contour: &[Point]) -> Vec<Point> {
    resample_closed(contour, 1.0)
}

/// Hausdorff distance between two closed contours in mm.
pub fn hausdorff_mm(g: &[Point], s: &[Point], pitch: f64) -> Result<f64> {
    check_pitch(pitch)?;
    Ok(hausdorff_points(&unit_resample(g), &unit_resample(s))? * pitch)
}

/// Mean absolute deviation between two closed contours in mm.
pub fn mad_mm(g: &[Point], s: &[Point], pitch: f64) -> Result<f64> {
    check_pitch(pitch)?;
    Ok(mad_points(&unit_resample(g), &unit_resample(s))? * pitch)
}

/// 1D lower envelope of parabolas (Felzenszwalb–Huttenlocher). `f` holds
/// squared distances (or `INF`); the result is written to `out`.
fn dt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    // skip leading infinite samples so every parabola in the envelope is finite
    let Some(first) = f.iter().position(|x| x.is_finite()) else {
        out.fill(f64::INFINITY);
        return;
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in first + 1..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let p = v[k] as f64;
        *o = (qf - p) * (qf - p) + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest set
/// pixel of `mask`.
pub fn edt_squared(mask: &RegionMask) -> Result<Vec<f64>> {
    if !mask.bits.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    let (w, h) = mask.dims();
    let mut grid: Vec<f64> = mask
        .bits
        .iter()
        .map(|&b| if b { 0.0 } else { f64::INFINITY })
        .collect();

    // columns
    let mut cols = vec![0.0; w * h];
    cols.par_chunks_mut(h).enumerate().for_each(|(x, out)| {
        let f: Vec<f64> = (0..h).map(|y| grid[y * w + x]).collect();
        let mut v = vec![0usize; h];
        let mut z = vec![0.0; h + 1];
        dt_1d(&f, out, &mut v, &mut z);
    });
    // rows
    grid.par_chunks_mut(w).enumerate().for_each(|(y, out)| {
        let f: Vec<f64> = (0..w).map(|x| cols[x * h + y]).collect();
        let mut v = vec![0usize; w];
        let mut z = vec![0.0; w + 1];
        dt_1d(&f, out, &mut v, &mut z);
    });
    Ok(grid)
}

pub fn edt(mask: &RegionMask) -> Result<GrayImage> {
    let sq = edt_squared(mask)?;
    GrayImage::new(mask.width, mask.height, sq.into_iter().map(f64::sqrt).collect())
}

/// Log-scaled false-positive and false-negative distance mass of `s`
/// against `g`, using `ln(1 + x)` so perfect overlap scores 0.
pub fn dfpd_dfnd(g: &RegionMask, s: &RegionMask) -> Result<(f64, f64)> {
    g.ensure_same_dims(s)?;
    let d_in = edt(g)?;
    let d_out = edt(&g.inverted())?;
    let (mut fp, mut fneg) = (0.0, 0.0);
    for (i, &b) in s.bits.iter().enumerate() {
        if b {
            fp += d_in.data()[i];
            fneg += d_out.data()[i];
        }
    }
    Ok((fp.ln_1p(), fneg.ln_1p()))
}

/// Per-frame scores of an estimated contour against the truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub frame_index: usize,
    pub dice: f64,
    pub hausdorff_mm: f64,
    pub mad_mm: f64,
    pub dfpd: f64,
    pub dfnd: f64,
}

pub fn score_frame(
    frame_index: usize,
    truth: &[Point],
    estimate: &[Point],
    dims: (usize, usize),
    pitch: f64,
) -> Result<FrameScore> {
    let g = rasterize(truth, dims)?;
    let s = rasterize(estimate, dims)?;
    let (dfpd, dfnd) = dfpd_dfnd(&g, &s)?;
    Ok(FrameScore {
        frame_index,
        dice: dice(&g, &s)?,
        hausdorff_mm: hausdorff_mm(truth, estimate, pitch)?,
        mad_mm: mad_mm(truth, estimate, pitch)?,
        dfpd,
        dfnd,
    })
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.3}±{:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub dice: Summary,
    pub hausdorff_mm: Summary,
    pub mad_mm: Summary,
    pub dfpd: Summary,
    pub dfnd: Summary,
}

pub fn summarize(scores: &[FrameScore]) -> ScoreSummary {
    let col = |f: fn(&FrameScore) -> f64| Summary::of(&scores.iter().map(f).collect::<Vec<_>>());
    ScoreSummary {
        dice: col(|s| s.dice),
        hausdorff_mm: col(|s| s.hausdorff_mm),
        mad_mm: col(|s| s.mad_mm),
        dfpd: col(|s| s.dfpd),
        dfnd: col(|s| s.dfnd),
    }
}

/// Scores paired contour lists frame by frame, in parallel.
pub fn score_sequence(
    truth: &[Vec<Point>],
    estimate: &[Vec<Point>],
    dims: (usize, usize),
    pitch: f64,
) -> Result<Vec<FrameScore>> {
    if truth.len() != estimate.len() {
        return Err(Error::InvalidParameter(format!(
            "{} truth contours but {} estimates",
            truth.len(),
            estimate.len()
        )));
    }
    truth
        .par_iter()
        .zip(estimate.par_iter())
        .enumerate()
        .map(|(i, (g, s))| score_frame(i, g, s, dims, pitch))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::point_in_polygon;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square(x0: f64, y0: f64, s: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x0 + s, y0),
            Point::new(x0 + s, y0 + s),
            Point::new(x0, y0 + s),
        ]
    }

    fn brute_mask(poly: &[Point], dims: (usize, usize)) -> RegionMask {
        RegionMask::from_fn(dims.0, dims.1, |x, y| {
            point_in_polygon(poly, Point::new(x as f64, y as f64))
        })
    }

    fn brute_edt_sq(mask: &RegionMask) -> Vec<f64> {
        let ones: Vec<(i64, i64)> = (0..mask.height)
            .flat_map(|y| (0..mask.width).map(move |x| (x, y)))
            .filter(|&(x, y)| mask.get(x, y))
            .map(|(x, y)| (x as i64, y as i64))
            .collect();
        let mut out = Vec::with_capacity(mask.bits.len());
        for y in 0..mask.height as i64 {
            for x in 0..mask.width as i64 {
                let d = ones
                    .iter()
                    .map(|&(a, b)| (a - x).pow(2) + (b - y).pow(2))
                    .min()
                    .unwrap();
                out.push(d as f64);
            }
        }
        out
    }

    #[test]
    fn square_rasterizes_inclusively() {
        let m = rasterize(&square(0.0, 0.0, 10.0), (20, 20)).unwrap();
        assert_eq!(m.count(), 121);
        assert_eq!(m, brute_mask(&square(0.0, 0.0, 10.0), (20, 20)));
    }

    #[test]
    fn two_point_contour_is_rejected() {
        let c = [Point::new(0.0, 0.0), Point::new(3.0, 3.0)];
        assert!(matches!(rasterize(&c, (8, 8)), Err(Error::SelfIntersectingContour)));
    }

    #[test]
    fn triangle_matches_brute_force() {
        let tri = vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(0.0, 4.0)];
        let m = rasterize(&tri, (8, 8)).unwrap();
        assert_eq!(m, brute_mask(&tri, (8, 8)));
        assert_eq!(m.count(), 15);
    }

    #[test]
    fn ellipse_polygons_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let e = crate::segmentation::EllipseParams::new(
                rng.random_range(15.0..25.0),
                rng.random_range(15.0..25.0),
                rng.random_range(4.0..12.0),
                rng.random_range(3.0..10.0),
                rng.random_range(-1.5..1.5),
            );
            let poly = e.sample(rng.random_range(8..80));
            assert_eq!(rasterize(&poly, (40, 40)).unwrap(), brute_mask(&poly, (40, 40)));
        }
    }

    #[test]
    fn dice_examples() {
        let a = rasterize(&square(0.0, 0.0, 9.0), (30, 30)).unwrap();
        let b = rasterize(&square(5.0, 0.0, 9.0), (30, 30)).unwrap();
        assert_eq!(a.count(), 100);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        let c = rasterize(&square(15.0, 15.0, 9.0), (30, 30)).unwrap();
        assert_eq!(dice(&a, &c).unwrap(), 0.0);
        let e = RegionMask::empty(30, 30);
        assert!(matches!(dice(&e, &e), Err(Error::BothEmpty)));
        assert!(matches!(
            dice(&a, &RegionMask::empty(3, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hausdorff_examples() {
        let a = square(0.0, 0.0, 1.0);
        let b = square(1.0, 0.0, 1.0);
        assert_eq!(hausdorff_mm(&a, &a, 0.0116).unwrap(), 0.0);
        assert!((hausdorff_mm(&a, &b, 0.0116).unwrap() - 0.0116).abs() < 1e-15);

        let sub = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        let sup = vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(4.0, 4.0)];
        let fwd = nearest_distances(&sub, &sup).into_iter().fold(0.0, f64::max);
        let back = nearest_distances(&sup, &sub).into_iter().fold(0.0, f64::max);
        assert_eq!(fwd, 0.0);
        assert!(back > 0.0);
        assert_eq!(hausdorff_points(&sub, &sup).unwrap(), back);
        assert!(matches!(hausdorff_points(&[], &sup), Err(Error::EmptyContour)));
    }

    #[test]
    fn mad_against_dilated_square() {
        let a = square(5.0, 5.0, 10.0);
        let b = square(4.0, 4.0, 12.0);
        let m = mad_mm(&a, &b, 1.0).unwrap();
        assert!((m - 1.0).abs() <= 0.1, "mad {m}");
        assert!(m <= hausdorff_mm(&a, &b, 1.0).unwrap());
        assert_eq!(mad_mm(&a, &a, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn pitch_scales_linearly() {
        let a = square(5.0, 5.0, 10.0);
        let b = square(4.0, 6.0, 12.0);
        assert_eq!(hausdorff_mm(&a, &b, 0.2).unwrap() * 2.0, hausdorff_mm(&a, &b, 0.4).unwrap());
        assert_eq!(mad_mm(&a, &b, 0.2).unwrap() * 2.0, mad_mm(&a, &b, 0.4).unwrap());
        assert!(hausdorff_mm(&a, &b, 0.0).is_err());
    }

    #[test]
    fn edt_examples() {
        let m = RegionMask::from_fn(11, 11, |x, y| x == 5 && y == 5);
        let d = edt(&m).unwrap();
        assert_eq!(d.get(0, 0), 50f64.sqrt());
        let ones = RegionMask::from_fn(6, 4, |_, _| true);
        assert!(edt(&ones).unwrap().data().iter().all(|&v| v == 0.0));
        assert!(matches!(edt(&RegionMask::empty(4, 4)), Err(Error::EmptyMask)));
    }

    #[test]
    fn edt_matches_brute_force_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..30 {
            let density = [0.001, 0.01, 0.2, 0.7][i % 4];
            let m = RegionMask::from_fn(33, 21, |_, _| rng.random_bool(density));
            if m.count() == 0 {
                continue;
            }
            assert_eq!(edt_squared(&m).unwrap(), brute_edt_sq(&m));
        }
    }

    #[test]
    fn dfpd_dfnd_examples() {
        let g = rasterize(&square(5.0, 5.0, 10.0), (30, 30)).unwrap();
        let inner = rasterize(&square(7.0, 7.0, 4.0), (30, 30)).unwrap();
        assert_eq!(dfpd_dfnd(&g, &inner).unwrap().0, 0.0);

        let (_, dfnd) = dfpd_dfnd(&g, &g).unwrap();
        let inv = brute_edt_sq(&g.inverted());
        let mass: f64 = (0..g.bits.len()).filter(|&i| g.bits[i]).map(|i| inv[i].sqrt()).sum();
        assert!((dfnd - mass.ln_1p()).abs() < 1e-12);

        let mut spur = RegionMask::empty(30, 30);
        spur.bits[10 * 30 + 20] = true; // (20, 10): 5 px right of the edge x=15
        let (dfpd, _) = dfpd_dfnd(&g, &spur).unwrap();
        assert!((dfpd - 5f64.ln_1p()).abs() < 1e-12);
    }

    #[test]
    fn summary_format() {
        let s = Summary::of(&[0.9, 0.92, 0.94]);
        assert!((s.mean - 0.92).abs() < 1e-12);
        assert!((s.std - 0.02).abs() < 1e-12);
        assert_eq!(s.to_string(), "0.920±0.020");
    }

    proptest! {
        #[test]
        fn dice_is_symmetric(bits_a in proptest::collection::vec(any::<bool>(), 64),
                             bits_b in proptest::collection::vec(any::<bool>(), 64)) {
            let a = RegionMask { width: 8, height: 8, bits: bits_a };
            let b = RegionMask { width: 8, height: 8, bits: bits_b };
            match (dice(&a, &b), dice(&b, &a)) {
                (Ok(x), Ok(y)) => { prop_assert_eq!(x, y); prop_assert!((0.0..=1.0).contains(&x)); }
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false),
            }
        }

        #[test]
        fn contour_metrics_symmetric(pts_a in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..30),
                                     pts_b in proptest::collection::vec((0.0f64..50.0, 0.0f64..50.0), 1..30)) {
            let a: Vec<Point> = pts_a.into_iter().map(Point::from).collect();
            let b: Vec<Point> = pts_b.into_iter().map(Point::from).collect();
            prop_assert_eq!(hausdorff_points(&a, &b).unwrap(), hausdorff_points(&b, &a).unwrap());
            prop_assert_eq!(mad_points(&a, &b).unwrap(), mad_points(&b, &a).unwrap());
            prop_assert!(mad_points(&a, &b).unwrap() <= hausdorff_points(&a, &b).unwrap() + 1e-12);
        }
    }
}
