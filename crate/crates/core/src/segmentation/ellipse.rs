//! Direct least-squares ellipse fitting, Halíř–Flusser partitioned form.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Point;

/// Geometric ellipse: center, semi-axes `a >= b > 0`, major-axis angle in
/// `[-π/2, π/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipseParams {
    pub cx: f64,
    pub cy: f64,
    pub a: f64,
    pub b: f64,
    pub theta: f64,
}

/// Wrap an angle into `[-π/2, π/2)`.
pub fn wrap_half_pi(theta: f64) -> f64 {
    let t = (theta + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if t >= FRAC_PI_2 {
        t - PI
    } else {
        t
    }
}

impl EllipseParams {
    /// Build with `a`/`b` swapped into order and `theta` wrapped.
    pub fn new(cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> Self {
        let (a, b, theta) = if a >= b {
            (a, b, theta)
        } else {
            (b, a, theta + FRAC_PI_2)
        };
        Self {
            cx,
            cy,
            a,
            b,
            theta: wrap_half_pi(theta),
        }
    }

    pub fn circle(cx: f64, cy: f64, r: f64) -> Self {
        Self::new(cx, cy, r, r, 0.0)
    }

    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Point at parametric angle `t`.
    pub fn point_at(&self, t: f64) -> Point {
        let (s, c) = self.theta.sin_cos();
        let (x, y) = (self.a * t.cos(), self.b * t.sin());
        Point::new(self.cx + x * c - y * s, self.cy + x * s + y * c)
    }

    /// `n` points at equally spaced parametric angles, counterclockwise in
    /// the (x, y) plane.
    pub fn sample(&self, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| self.point_at(2.0 * PI * k as f64 / n as f64))
            .collect()
    }

    /// Normalized radial coordinate: `< 1` inside, `1` on the boundary.
    pub fn level(&self, p: Point) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.cx;
        let dy = p.y - self.cy;
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.level(p) <= 1.0
    }

    /// Same center and orientation, axes multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            a: self.a * factor,
            b: self.b * factor,
            ..*self
        }
    }

    pub fn area(&self) -> f64 {
        PI * self.a * self.b
    }

    pub fn is_valid(&self) -> bool {
        [self.cx, self.cy, self.a, self.b, self.theta]
            .iter()
            .all(|v| v.is_finite())
            && self.a >= self.b
            && self.b > 0.0
    }
}

/// General conic `A x² + B xy + C y² + D x + E y + F = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conic(pub [f64; 6]);

impl Conic {
    pub fn from_ellipse(e: &EllipseParams) -> Self {
        let (s, c) = e.theta.sin_cos();
        let (a2, b2) = (e.a * e.a, e.b * e.b);
        let a = c * c / a2 + s * s / b2;
        let b = 2.0 * c * s * (1.0 / a2 - 1.0 / b2);
        let cc = s * s / a2 + c * c / b2;
        let d = -2.0 * a * e.cx - b * e.cy;
        let ee = -b * e.cx - 2.0 * cc * e.cy;
        let f = a * e.cx * e.cx + b * e.cx * e.cy + cc * e.cy * e.cy - 1.0;
        Conic([a, b, cc, d, ee, f])
    }

    pub fn eval(&self, p: Point) -> f64 {
        let [a, b, c, d, e, f] = self.0;
        a * p.x * p.x + b * p.x * p.y + c * p.y * p.y + d * p.x + e * p.y + f
    }

    pub fn to_ellipse(&self) -> Result<EllipseParams> {
        let [a, b, c, d, e, f] = self.0;
        let disc = 4.0 * a * c - b * b;
        if !(disc > 0.0) {
            return Err(Error::DegenerateConfiguration(
                "fitted conic is not an ellipse".into(),
            ));
        }
        let m = Matrix2::new(2.0 * a, b, b, 2.0 * c);
        let center = m
            .lu()
            .solve(&Vector2::new(-d, -e))
            .ok_or_else(|| Error::DegenerateConfiguration("conic has no center".into()))?;
        let f0 = f + 0.5 * (d * center.x + e * center.y);
        let q = Matrix2::new(a, 0.5 * b, 0.5 * b, c);
        let eig = q.symmetric_eigen();
        let (l1, l2) = (eig.eigenvalues[0], eig.eigenvalues[1]);
        let s1 = -f0 / l1;
        let s2 = -f0 / l2;
        if !(s1 > 0.0 && s2 > 0.0) {
            return Err(Error::DegenerateConfiguration("imaginary ellipse".into()));
        }
        // the smaller eigenvalue belongs to the major axis
        let (major, minor, k) = if s1 >= s2 {
            (s1.sqrt(), s2.sqrt(), 0)
        } else {
            (s2.sqrt(), s1.sqrt(), 1)
        };
        let v = eig.eigenvectors.column(k);
        let theta = if (major - minor).abs() <= 1e-12 * major {
            0.0
        } else {
            v[1].atan2(v[0])
        };
        let out = EllipseParams::new(center.x, center.y, major, minor, theta);
        if !out.is_valid() {
            return Err(Error::DegenerateConfiguration("non-finite ellipse".into()));
        }
        Ok(out)
    }
}

/// Direct least-squares fit with the ellipse constraint `4AC - B² = 1`.
pub fn fit_conic(points: &[Point]) -> Result<Conic> {
    if points.len() < 5 {
        return Err(Error::TooFewPoints(points.len()));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
    let my = points.iter().map(|p| p.y).sum::<f64>() / n;
    let scale = points
        .iter()
        .map(|p| (p.x - mx).hypot(p.y - my))
        .sum::<f64>()
        / n;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::DegenerateConfiguration("points coincide".into()));
    }

    let mut s1 = Matrix3::<f64>::zeros();
    let mut s2 = Matrix3::<f64>::zeros();
    let mut s3 = Matrix3::<f64>::zeros();
    for p in points {
        let x = (p.x - mx) / scale;
        let y = (p.y - my) / scale;
        let d1 = Vector3::new(x * x, x * y, y * y);
        let d2 = Vector3::new(x, y, 1.0);
        s1 += d1 * d1.transpose();
        s2 += d1 * d2.transpose();
        s3 += d2 * d2.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::DegenerateConfiguration("points are collinear".into()))?;
    if s3.determinant().abs() < 1e-12 {
        return Err(Error::DegenerateConfiguration("points are collinear".into()));
    }
    let t = -s3_inv * s2.transpose();
    let m = s1 + s2 * t;
    // premultiply by the inverse of the constraint block
    let c1_inv = Matrix3::new(0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0);
    let m = c1_inv * m;

    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in m.complex_eigenvalues().iter() {
        if lambda.im.abs() > 1e-9 * (1.0 + lambda.re.abs()) {
            continue;
        }
        let shifted = m - Matrix3::identity() * lambda.re;
        let svd = shifted.svd(false, true);
        let v_t = match svd.v_t {
            Some(v) => v,
            None => continue,
        };
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("three singular values");
        let v: Vector3<f64> = v_t.row(idx).transpose();
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 {
            // among admissible vectors keep the one with the smallest
            // algebraic residual
            let a2 = t * v;
            let coeffs = [v[0], v[1], v[2], a2[0], a2[1], a2[2]];
            let norm = cond.sqrt();
            let resid = residual(&coeffs, points, mx, my, scale) / (norm * norm);
            if best.as_ref().map_or(true, |(r, _)| resid < *r) {
                best = Some((resid, v));
            }
        }
    }
    let (_, a1) = best.ok_or_else(|| {
        Error::DegenerateConfiguration("no ellipse-constrained solution".into())
    })?;
    let a2 = t * a1;
    // undo the normalization x' = (x - mx)/s, y' = (y - my)/s
    let (a, b, c, d, e, f) = (a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]);
    let s = scale;
    let (a, b, c) = (a / (s * s), b / (s * s), c / (s * s));
    let (d, e) = (d / s, e / s);
    let big_d = d - 2.0 * a * mx - b * my;
    let big_e = e - 2.0 * c * my - b * mx;
    let big_f = f + a * mx * mx + b * mx * my + c * my * my - d * mx - e * my;
    let mut coeffs = [a, b, c, big_d, big_e, big_f];
    let norm = (4.0 * a * c - b * b).sqrt();
    coeffs.iter_mut().for_each(|v| *v /= norm);
    Ok(Conic(coeffs))
}

fn residual(coeffs: &[f64; 6], points: &[Point], mx: f64, my: f64, s: f64) -> f64 {
    let conic = Conic(*coeffs);
    points
        .iter()
        .map(|p| conic.eval(Point::new((p.x - mx) / s, (p.y - my) / s)).powi(2))
        .sum()
}

pub fn fit_ellipse(points: &[Point]) -> Result<EllipseParams> {
    fit_conic(points)?.to_ellipse()
}
