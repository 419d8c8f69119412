//! Local phase analysis: Cauchy band-pass, monogenic signal and the
//! feature asymmetry map.
//!
//! Frequencies are expressed in cycles per pixel (DFT index divided by the
//! axis length, signed), multiplied by `CauchyParams::freq_scale`. With the
//! default scale of 1 and `w0 = 10` the band-pass peaks at a 10 px period.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CauchyParams {
    pub w0: f64,
    pub u: f64,
    /// Multiplier applied to the cycles/pixel frequency radius.
    pub freq_scale: f64,
}

impl Default for CauchyParams {
    fn default() -> Self {
        Self {
            w0: 10.0,
            u: 1.0,
            freq_scale: 1.0,
        }
    }
}

impl CauchyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u >= 1.0) || !(self.w0 > 0.0) || !(self.freq_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "cauchy parameters need u >= 1, w0 > 0, freq_scale > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "value")]
pub enum ThresholdMode {
    Fixed(f64),
    RayleighEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaParams {
    pub threshold_mode: ThresholdMode,
    pub epsilon: f64,
}

impl Default for FaParams {
    fn default() -> Self {
        Self {
            threshold_mode: ThresholdMode::RayleighEstimate,
            epsilon: 1e-6,
        }
    }
}

impl FaParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("FA epsilon must be positive".into()));
        }
        if let ThresholdMode::Fixed(t) = self.threshold_mode {
            if !(0.0..1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!(
                    "fixed FA threshold must be in [0, 1), got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// `|w|^u * exp(-w0 |w|)`.
pub fn cauchy_gain(w: [f64; 2], params: &CauchyParams) -> f64 {
    let r = w[0].hypot(w[1]);
    if r == 0.0 {
        return 0.0;
    }
    r.powf(params.u) * (-params.w0 * r).exp()
}

/// Signed DFT frequency of index `k` on an axis of length `n`, cycles/pixel.
pub fn dft_frequency(k: usize, n: usize) -> f64 {
    if k <= (n - 1) / 2 {
        k as f64 / n as f64
    } else {
        k as f64 / n as f64 - 1.0
    }
}

/// In-place 2D DFT over a row-major complex buffer.
pub fn fft2(buf: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    buf.par_chunks_mut(width).for_each(|row| row_fft.process(row));

    let mut cols = vec![Complex64::default(); width * height];
    for y in 0..height {
        for x in 0..width {
            cols[x * height + y] = buf[y * width + x];
        }
    }
    cols.par_chunks_mut(height).for_each(|col| col_fft.process(col));
    for x in 0..width {
        for y in 0..height {
            buf[y * width + x] = cols[x * height + y];
        }
    }
    if inverse {
        let norm = 1.0 / (width * height) as f64;
        buf.iter_mut().for_each(|c| *c *= norm);
    }
}

/// Forward transform, per-frequency gain, inverse transform. Returns the
/// complex result so callers can inspect the imaginary residue.
pub fn apply_frequency_gain(
    img: &GrayImage,
    gain: impl Fn(usize, usize) -> Complex64 + Sync,
) -> Vec<Complex64> {
    let (w, h) = img.dims();
    let mut buf: Vec<Complex64> = img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, w, h, false);
    buf.par_chunks_mut(w).enumerate().for_each(|(ky, row)| {
        for (kx, c) in row.iter_mut().enumerate() {
            *c *= gain(kx, ky);
        }
    });
    fft2(&mut buf, w, h, true);
    buf
}

/// Even (band-pass) and odd (Riesz) parts of the monogenic signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Monogenic {
    pub even: GrayImage,
    pub odd1: GrayImage,
    pub odd2: GrayImage,
}

/// Spectral multipliers `(C, R1, R2)` at DFT index `(kx, ky)`.
///
/// The Riesz factor is `i w_k / |w|`, zero at DC, and zero along the
/// Nyquist line of its own axis where it cannot be Hermitian.
pub fn monogenic_multipliers(
    kx: usize,
    ky: usize,
    width: usize,
    height: usize,
    params: &CauchyParams,
) -> (f64, Complex64, Complex64) {
    let w1 = dft_frequency(kx, width) * params.freq_scale;
    let w2 = dft_frequency(ky, height) * params.freq_scale;
    let c = cauchy_gain([w1, w2], params);
    let r = w1.hypot(w2);
    if r == 0.0 {
        return (c, Complex64::default(), Complex64::default());
    }
    let nyq_x = width % 2 == 0 && kx == width / 2;
    let nyq_y = height % 2 == 0 && ky == height / 2;
    let r1 = if nyq_x { 0.0 } else { w1 / r };
    let r2 = if nyq_y { 0.0 } else { w2 / r };
    (c, Complex64::new(0.0, r1 * c), Complex64::new(0.0, r2 * c))
}

pub fn monogenic(img: &GrayImage, params: &CauchyParams) -> Result<Monogenic> {
    params.validate()?;
    img.ensure_min_dims(crate::image::MIN_PIPELINE_DIM)?;
    let (w, h) = img.dims();

    let mut spectrum: Vec<Complex64> =
        img.data().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut spectrum, w, h, false);

    let mut even = vec![Complex64::default(); w * h];
    let mut odd1 = vec![Complex64::default(); w * h];
    let mut odd2 = vec![Complex64::default(); w * h];
    even.par_chunks_mut(w)
        .zip(odd1.par_chunks_mut(w))
        .zip(odd2.par_chunks_mut(w))
        .enumerate()
        .for_each(|(ky, ((e, o1), o2))| {
            for kx in 0..w {
                let f = spectrum[ky * w + kx];
                let (c, r1, r2) = monogenic_multipliers(kx, ky, w, h, params);
                e[kx] = f * c;
                o1[kx] = f * r1;
                o2[kx] = f * r2;
            }
        });
    let ((), ((), ())) = rayon::join(
        || fft2(&mut even, w, h, true),
        || {
            rayon::join(
                || fft2(&mut odd1, w, h, true),
                || fft2(&mut odd2, w, h, true),
            )
        },
    );
    let real = |v: Vec<Complex64>| GrayImage::new(w, h, v.into_iter().map(|c| c.re).collect());
    Ok(Monogenic {
        even: real(even)?,
        odd1: real(odd1)?,
        odd2: real(odd2)?,
    })
}

/// Noise threshold for the given mode: a fixed value, or the geometric
/// mean of the local amplitude.
pub fn fa_threshold(m: &Monogenic, params: &FaParams) -> f64 {
    match params.threshold_mode {
        ThresholdMode::Fixed(t) => t,
        ThresholdMode::RayleighEstimate => {
            let n = m.even.len();
            if n == 0 {
                return 0.0;
            }
            let sum_log: f64 = m
                .even
                .data()
                .iter()
                .zip(m.odd1.data())
                .zip(m.odd2.data())
                .map(|((e, o1), o2)| ((e * e + o1 * o1 + o2 * o2).sqrt() + params.epsilon).ln())
                .sum();
            (sum_log / n as f64).exp()
        }
    }
}

/// Feature asymmetry: `max(0, |odd| - |even| - T) / (A + eps)`, clamped to
/// `[0, 1]`, where `A` is the local amplitude.
pub fn feature_asymmetry(m: &Monogenic, params: &FaParams) -> Result<GrayImage> {
    params.validate()?;
    m.even.ensure_same_dims(&m.odd1)?;
    m.even.ensure_same_dims(&m.odd2)?;
    let t = fa_threshold(m, params);
    let eps = params.epsilon;
    let data: Vec<f64> = m
        .even
        .data()
        .par_iter()
        .zip(m.odd1.data().par_iter())
        .zip(m.odd2.data().par_iter())
        .map(|((&e, &o1), &o2)| {
            let odd = (o1 * o1 + o2 * o2).sqrt();
            let amp = (e * e + odd * odd).sqrt();
            let num = (odd - e.abs() - t).max(0.0);
            (num / (amp + eps)).clamp(0.0, 1.0)
        })
        .collect();
    GrayImage::new(m.even.width(), m.even.height(), data)
}

/// Band-pass, monogenic signal and FA in one call.
pub fn fa_map(img: &GrayImage, cauchy: &CauchyParams, fa: &FaParams) -> Result<GrayImage> {
    let m = monogenic(img, cauchy)?;
    feature_asymmetry(&m, fa)
}
