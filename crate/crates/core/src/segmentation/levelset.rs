//! Narrowband distance-regularized level set evolution (Li et al.).
//!
//! The update is the explicit gradient flow
//!
//! ```text
//! dφ/dτ = μ div(d_p(|∇φ|) ∇φ) + λ δ_ε(φ) div(g ∇φ/|∇φ|) + α g δ_ε(φ)
//! ```
//!
//! with the double-well potential, central differences and clamp-to-edge
//! borders. Every pixel of an iteration is computed from the previous
//! iterate only, so results do not depend on the thread count.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

use super::ellipse::EllipseParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrlseParams {
    pub timestep: f64,
    pub mu: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub narrowband_halfwidth: usize,
    pub c0: f64,
    pub edge_sigma: f64,
}

impl DrlseParams {
    /// Published constants for a given timestep. The regularization weight
    /// follows the reference DRLSE code, where `μ = 0.2 / Δτ`.
    pub fn with_timestep(timestep: f64) -> Self {
        Self {
            timestep,
            mu: 0.2 / timestep,
            lambda: 1.0,
            alpha: -1.0,
            epsilon: 1.0,
            iterations: 15,
            narrowband_halfwidth: 1,
            c0: 1.0,
            edge_sigma: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.iterations < 1 {
            return bad("DRLSE needs at least one iteration".into());
        }
        if !(self.mu * self.timestep < 0.25) || !(self.mu >= 0.0) {
            return bad(format!(
                "mu * timestep must be in [0, 0.25) (got {} * {})",
                self.mu, self.timestep
            ));
        }
        if !(self.epsilon > 0.0) || !(self.timestep > 0.0) || !(self.c0 > 0.0) {
            return bad("epsilon, timestep and c0 must be positive".into());
        }
        if !(self.edge_sigma >= 0.0) {
            return bad("edge_sigma must be non-negative".into());
        }
        if self.narrowband_halfwidth < 1 {
            return bad("narrowband halfwidth must be at least 1".into());
        }
        Ok(())
    }
}

impl Default for DrlseParams {
    fn default() -> Self {
        Self::with_timestep(10.0)
    }
}

/// Level set function φ; negative inside the contour.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSetField(pub GrayImage);

impl LevelSetField {
    pub fn phi(&self) -> &GrayImage {
        &self.0
    }

    pub fn inside_count(&self) -> usize {
        self.0.data().iter().filter(|&&v| v < 0.0).count()
    }
}

/// Binary LSF: `-c0` inside the ellipse scaled by `shrink`, `+c0` outside.
pub fn init_lsf(
    ellipse: &EllipseParams,
    shrink: f64,
    dims: (usize, usize),
    c0: f64,
) -> Result<LevelSetField> {
    let e = ellipse.scaled(shrink);
    if !(e.a >= 2.0 && e.b >= 2.0) {
        return Err(Error::EllipseTooSmall { a: e.a, b: e.b });
    }
    let (w, h) = dims;
    Ok(LevelSetField(GrayImage::from_fn(w, h, |x, y| {
        if e.contains(crate::image::Point::new(x as f64, y as f64)) {
            -c0
        } else {
            c0
        }
    })))
}

/// Separable Gaussian blur, kernel truncated at 3σ, clamp-to-edge.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    let (w, h) = img.dims();
    let horiz: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let k = &k;
            (0..w).map(move |x| {
                k.iter()
                    .enumerate()
                    .map(|(i, kv)| kv * img.get_clamped(x as isize + i as isize - r, y as isize))
                    .sum::<f64>()
            })
        })
        .collect();
    let horiz = GrayImage::new(w, h, horiz).expect("same dims");
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let k = &k;
            let horiz = &horiz;
            (0..w).map(move |x| {
                k.iter()
                    .enumerate()
                    .map(|(i, kv)| kv * horiz.get_clamped(x as isize, y as isize + i as isize - r))
                    .sum::<f64>()
            })
        })
        .collect();
    GrayImage::new(w, h, data).expect("same dims")
}

/// Central-difference gradient with clamp-to-edge neighbors.
fn gradient(f: &GrayImage) -> (GrayImage, GrayImage) {
    let (w, h) = f.dims();
    let gx = GrayImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        0.5 * (f.get_clamped(xi + 1, yi) - f.get_clamped(xi - 1, yi))
    });
    let gy = GrayImage::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        0.5 * (f.get_clamped(xi, yi + 1) - f.get_clamped(xi, yi - 1))
    });
    (gx, gy)
}

/// Edge indicator `g = 1 / (1 + |∇(G_σ * I)|²)`.
pub fn edge_indicator(img: &GrayImage, sigma: f64) -> GrayImage {
    let smooth = gaussian_blur(img, sigma);
    let (gx, gy) = gradient(&smooth);
    let data = gx
        .data()
        .iter()
        .zip(gy.data())
        .map(|(a, b)| 1.0 / (1.0 + a * a + b * b))
        .collect();
    GrayImage::new(img.width(), img.height(), data).expect("same dims")
}

/// Smoothed Dirac delta with support `[-ε, ε]`.
pub fn dirac(x: f64, eps: f64) -> f64 {
    if x.abs() <= eps {
        (1.0 / (2.0 * eps)) * (1.0 + (PI * x / eps).cos())
    } else {
        0.0
    }
}

/// `d_p(s) = p'(s) / s` for the double-well potential.
pub fn double_well_ratio(s: f64) -> f64 {
    let ps = if s <= 1.0 {
        (2.0 * PI * s).sin() / (2.0 * PI)
    } else {
        s - 1.0
    };
    let num = if ps != 0.0 { ps } else { 1.0 };
    let den = if s != 0.0 { s } else { 1.0 };
    num / den
}

/// Pixels adjacent (4-neighborhood) to a sign change of φ.
pub fn zero_crossings(phi: &GrayImage) -> Vec<bool> {
    let (w, h) = phi.dims();
    let d = phi.data();
    let mut z = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let neg = d[i] < 0.0;
            if x + 1 < w && (d[i + 1] < 0.0) != neg {
                z[i] = true;
                z[i + 1] = true;
            }
            if y + 1 < h && (d[i + w] < 0.0) != neg {
                z[i] = true;
                z[i + w] = true;
            }
        }
    }
    z
}

/// Zero-crossing pixels dilated by a `(2r+1)²` square.
pub fn narrowband(phi: &GrayImage, halfwidth: usize) -> Vec<bool> {
    let (w, h) = phi.dims();
    let z = zero_crossings(phi);
    let r = halfwidth as isize;
    // separable square dilation
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if z[y * w + x] {
                let lo = (x as isize - r).max(0) as usize;
                let hi = (x as isize + r).min(w as isize - 1) as usize;
                rows[y * w + lo..=y * w + hi].iter_mut().for_each(|v| *v = true);
            }
        }
    }
    let mut band = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if rows[y * w + x] {
                let lo = (y as isize - r).max(0) as usize;
                let hi = (y as isize + r).min(h as isize - 1) as usize;
                for yy in lo..=hi {
                    band[yy * w + x] = true;
                }
            }
        }
    }
    band
}

/// Mean `|∇φ|` over the narrowband of the given halfwidth.
pub fn mean_gradient_in_band(phi: &LevelSetField, halfwidth: usize) -> f64 {
    let band = narrowband(&phi.0, halfwidth);
    let (gx, gy) = gradient(&phi.0);
    let (sum, n) = band
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .fold((0.0, 0usize), |(s, n), (i, _)| {
            (s + gx.data()[i].hypot(gy.data()[i]), n + 1)
        });
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Evolve φ on a precomputed edge indicator `g`.
pub fn drlse_evolve_with_edge(
    phi0: &LevelSetField,
    g: &GrayImage,
    params: &DrlseParams,
) -> Result<LevelSetField> {
    params.validate()?;
    phi0.0.ensure_same_dims(g)?;
    let (w, h) = g.dims();
    let (vx, vy) = gradient(g);
    let mut phi = phi0.0.clone();

    for iteration in 0..params.iterations {
        let band = narrowband(&phi, params.narrowband_halfwidth);
        let (px, py) = gradient(&phi);
        let s: Vec<f64> = px
            .data()
            .iter()
            .zip(py.data())
            .map(|(a, b)| a.hypot(*b))
            .collect();
        const SMALL: f64 = 1e-10;
        let nx = GrayImage::new(
            w,
            h,
            px.data().iter().zip(&s).map(|(a, s)| a / (s + SMALL)).collect(),
        )?;
        let ny = GrayImage::new(
            w,
            h,
            py.data().iter().zip(&s).map(|(a, s)| a / (s + SMALL)).collect(),
        )?;
        // (d_p - 1) ∇φ; its divergence plus the Laplacian is div(d_p ∇φ)
        let rx = GrayImage::new(
            w,
            h,
            px.data()
                .iter()
                .zip(&s)
                .map(|(a, s)| (double_well_ratio(*s) - 1.0) * a)
                .collect(),
        )?;
        let ry = GrayImage::new(
            w,
            h,
            py.data()
                .iter()
                .zip(&s)
                .map(|(a, s)| (double_well_ratio(*s) - 1.0) * a)
                .collect(),
        )?;

        let prev = &phi;
        let next: Vec<f64> = (0..h)
            .into_par_iter()
            .flat_map_iter(|y| {
                let (band, nx, ny, rx, ry, vx, vy) = (&band, &nx, &ny, &rx, &ry, &vx, &vy);
                (0..w).map(move |x| {
                    let i = y * w + x;
                    let v = prev.data()[i];
                    if !band[i] {
                        return v;
                    }
                    let (xi, yi) = (x as isize, y as isize);
                    let div = |fx: &GrayImage, fy: &GrayImage| {
                        0.5 * (fx.get_clamped(xi + 1, yi) - fx.get_clamped(xi - 1, yi))
                            + 0.5 * (fy.get_clamped(xi, yi + 1) - fy.get_clamped(xi, yi - 1))
                    };
                    let lap = prev.get_clamped(xi + 1, yi)
                        + prev.get_clamped(xi - 1, yi)
                        + prev.get_clamped(xi, yi + 1)
                        + prev.get_clamped(xi, yi - 1)
                        - 4.0 * v;
                    let dist_reg = div(rx, ry) + lap;
                    let curvature = div(nx, ny);
                    let d = dirac(v, params.epsilon);
                    let gi = g.data()[i];
                    let edge = d * (vx.data()[i] * nx.data()[i] + vy.data()[i] * ny.data()[i])
                        + d * gi * curvature;
                    let area = d * gi;
                    v + params.timestep
                        * (params.mu * dist_reg + params.lambda * edge + params.alpha * area)
                })
            })
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { iteration });
        }
        phi = GrayImage::new(w, h, next)?;
    }
    Ok(LevelSetField(phi))
}

/// Evolve φ toward edges of `img_b`.
pub fn drlse_evolve(
    phi0: &LevelSetField,
    img_b: &GrayImage,
    params: &DrlseParams,
) -> Result<LevelSetField> {
    params.validate()?;
    let g = edge_indicator(img_b, params.edge_sigma);
    drlse_evolve_with_edge(phi0, &g, params)
}
