//! Sequence configuration, presets and the flat `key = value` format.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{CauchyParams, FaParams, ThresholdMode};
use crate::segmentation::{DrlseParams, SegmentParams};
use crate::tracking::EkfParams;

pub const UHFUS_PITCH_MM: f64 = 0.0116;
pub const HFUS_PITCH_MM: f64 = 0.0925;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Uhfus,
    Hfus,
    Custom,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Uhfus => "uhfus",
            Preset::Hfus => "hfus",
            Preset::Custom => "custom",
        }
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uhfus" => Ok(Preset::Uhfus),
            "hfus" => Ok(Preset::Hfus),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Parse(format!("unknown preset '{other}'"))),
        }
    }
}

/// Clustering window: fixed, or chosen from the first segmented frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "size")]
pub enum ClusterKernel {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub downsample_factor: usize,
    pub bilateral_kernel: usize,
    pub bilateral_sigma_spatial: f64,
    pub bilateral_sigma_range: f64,
    pub cluster_kernel: ClusterKernel,
    pub cauchy: CauchyParams,
    pub fa: FaParams,
    pub fa_min: f64,
    pub radial_n: usize,
    pub radial_m: usize,
    pub shrink_factor: f64,
    pub drlse: DrlseParams,
    pub ekf: EkfParams,
    pub pixel_pitch_mm: f64,
    /// Full-resolution diameter at or below which the 3×3 clustering window
    /// is used.
    pub small_vessel_diameter_px: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self::uhfus()
    }
}

impl SequenceConfig {
    pub fn uhfus() -> Self {
        Self {
            downsample_factor: 4,
            bilateral_kernel: 5,
            bilateral_sigma_spatial: 5.0 / 2.5,
            bilateral_sigma_range: 25.0,
            cluster_kernel: ClusterKernel::Auto,
            cauchy: CauchyParams::default(),
            fa: FaParams::default(),
            fa_min: 0.3,
            radial_n: 360,
            radial_m: 100,
            shrink_factor: 0.75,
            drlse: DrlseParams::default(),
            ekf: EkfParams::default(),
            pixel_pitch_mm: UHFUS_PITCH_MM,
            small_vessel_diameter_px: 70.0,
        }
    }

    /// Lower-frequency scanner: 3×3 bilateral, `w0 = 5`, `Δτ = 8`, and no
    /// downsampling since speckle is milder at this pitch.
    pub fn hfus() -> Self {
        Self {
            downsample_factor: 1,
            bilateral_kernel: 3,
            bilateral_sigma_spatial: 3.0 / 2.5,
            bilateral_sigma_range: 50.0,
            cauchy: CauchyParams {
                w0: 5.0,
                ..CauchyParams::default()
            },
            drlse: DrlseParams::with_timestep(8.0),
            pixel_pitch_mm: HFUS_PITCH_MM,
            ..Self::uhfus()
        }
    }

    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Uhfus | Preset::Custom => Self::uhfus(),
            Preset::Hfus => Self::hfus(),
        }
    }

    pub fn segment_params(&self) -> SegmentParams {
        SegmentParams {
            radial_n: self.radial_n,
            radial_m: self.radial_m,
            fa_min: self.fa_min,
            shrink_factor: self.shrink_factor,
            drlse: self.drlse,
        }
    }

    /// Clustering window for a vessel of full-resolution major diameter
    /// `diameter_px`.
    pub fn cluster_kernel_for(&self, diameter_px: f64) -> usize {
        match self.cluster_kernel {
            ClusterKernel::Fixed(k) => k,
            ClusterKernel::Auto if diameter_px <= self.small_vessel_diameter_px => 3,
            ClusterKernel::Auto => 7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let odd3 = |k: usize| k >= 3 && k % 2 == 1;
        if self.downsample_factor < 1 {
            return bad("downsample_factor must be >= 1".into());
        }
        if !odd3(self.bilateral_kernel) {
            return Err(Error::BadKernel(self.bilateral_kernel));
        }
        if let ClusterKernel::Fixed(k) = self.cluster_kernel {
            if !odd3(k) {
                return Err(Error::BadKernel(k));
            }
        }
        if !(self.bilateral_sigma_spatial > 0.0 && self.bilateral_sigma_range > 0.0) {
            return bad("bilateral sigmas must be positive".into());
        }
        if self.radial_n < 8 {
            return bad(format!("radial_n must be >= 8, got {}", self.radial_n));
        }
        if self.radial_m < 2 {
            return bad(format!("radial_m must be >= 2, got {}", self.radial_m));
        }
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return bad(format!("shrink_factor must be in (0, 1), got {}", self.shrink_factor));
        }
        if !(0.0..=1.0).contains(&self.fa_min) {
            return bad(format!("fa_min must be in [0, 1], got {}", self.fa_min));
        }
        if !(self.pixel_pitch_mm > 0.0 && self.pixel_pitch_mm.is_finite()) {
            return bad(format!("pixel_pitch_mm must be positive, got {}", self.pixel_pitch_mm));
        }
        if !(self.small_vessel_diameter_px > 0.0) {
            return bad("small_vessel_diameter_px must be positive".into());
        }
        self.cauchy.validate()?;
        self.fa.validate()?;
        self.drlse.validate()?;
        for (name, m) in [("p0", &self.ekf.p0), ("q", &self.ekf.q), ("r", &self.ekf.r)] {
            if (m - m.transpose()).abs().max() > 1e-12
                || crate::tracking::min_eigenvalue(m) < -1e-12
            {
                return bad(format!("ekf {name} must be symmetric positive semi-definite"));
            }
        }
        Ok(())
    }

    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Parse(format!("bad value '{v}' for key '{key}'")))
        }
        let v = value.trim();
        match key.trim() {
            "preset" => *self = Self::preset(v.parse()?),
            "downsample_factor" => self.downsample_factor = num(key, v)?,
            "bilateral_kernel" => self.bilateral_kernel = num(key, v)?,
            "bilateral_sigma_spatial" => self.bilateral_sigma_spatial = num(key, v)?,
            "bilateral_sigma_range" => self.bilateral_sigma_range = num(key, v)?,
            "cluster_kernel" => {
                self.cluster_kernel = if v == "auto" {
                    ClusterKernel::Auto
                } else {
                    ClusterKernel::Fixed(num(key, v)?)
                }
            }
            "cauchy_w0" => self.cauchy.w0 = num(key, v)?,
            "cauchy_u" => self.cauchy.u = num(key, v)?,
            "cauchy_freq_scale" => self.cauchy.freq_scale = num(key, v)?,
            "fa_threshold_mode" => {
                self.fa.threshold_mode = match v {
                    "rayleigh_estimate" => ThresholdMode::RayleighEstimate,
                    "fixed" => match self.fa.threshold_mode {
                        ThresholdMode::Fixed(t) => ThresholdMode::Fixed(t),
                        ThresholdMode::RayleighEstimate => ThresholdMode::Fixed(0.0),
                    },
                    other => return Err(Error::Parse(format!("unknown fa_threshold_mode '{other}'"))),
                }
            }
            "fa_threshold" => self.fa.threshold_mode = ThresholdMode::Fixed(num(key, v)?),
            "fa_epsilon" => self.fa.epsilon = num(key, v)?,
            "fa_min" => self.fa_min = num(key, v)?,
            "radial_n" => self.radial_n = num(key, v)?,
            "radial_m" => self.radial_m = num(key, v)?,
            "shrink_factor" => self.shrink_factor = num(key, v)?,
            "drlse_timestep" => self.drlse.timestep = num(key, v)?,
            "drlse_mu" => self.drlse.mu = num(key, v)?,
            "drlse_lambda" => self.drlse.lambda = num(key, v)?,
            "drlse_alpha" => self.drlse.alpha = num(key, v)?,
            "drlse_epsilon" => self.drlse.epsilon = num(key, v)?,
            "drlse_iterations" => self.drlse.iterations = num(key, v)?,
            "drlse_narrowband" => self.drlse.narrowband_halfwidth = num(key, v)?,
            "drlse_c0" => self.drlse.c0 = num(key, v)?,
            "drlse_edge_sigma" => self.drlse.edge_sigma = num(key, v)?,
            "ekf_p0" => self.ekf.p0 = Matrix4::from_diagonal_element(num(key, v)?),
            "ekf_q" => self.ekf.q = Matrix4::from_diagonal_element(num(key, v)?),
            "ekf_r" => self.ekf.r = Matrix4::from_diagonal_element(num(key, v)?),
            "pixel_pitch_mm" => self.pixel_pitch_mm = num(key, v)?,
            "small_vessel_diameter_px" => self.small_vessel_diameter_px = num(key, v)?,
            other => return Err(Error::Parse(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Apply a flat config text on top of `self`. Blank lines and `#`
    /// comments are ignored; keys apply in file order.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_overrides<'a>(
        &mut self,
        overrides: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<()> {
        for (k, v) in overrides {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Render as config text. EKF matrices are written as their first
    /// diagonal entry, which is exact for the isotropic defaults.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("downsample_factor", self.downsample_factor.to_string());
        kv("bilateral_kernel", self.bilateral_kernel.to_string());
        kv("bilateral_sigma_spatial", self.bilateral_sigma_spatial.to_string());
        kv("bilateral_sigma_range", self.bilateral_sigma_range.to_string());
        kv(
            "cluster_kernel",
            match self.cluster_kernel {
                ClusterKernel::Auto => "auto".to_string(),
                ClusterKernel::Fixed(k) => k.to_string(),
            },
        );
        kv("cauchy_w0", self.cauchy.w0.to_string());
        kv("cauchy_u", self.cauchy.u.to_string());
        kv("cauchy_freq_scale", self.cauchy.freq_scale.to_string());
        match self.fa.threshold_mode {
            ThresholdMode::RayleighEstimate => kv("fa_threshold_mode", "rayleigh_estimate".into()),
            ThresholdMode::Fixed(t) => kv("fa_threshold", t.to_string()),
        }
        kv("fa_epsilon", self.fa.epsilon.to_string());
        kv("fa_min", self.fa_min.to_string());
        kv("radial_n", self.radial_n.to_string());
        kv("radial_m", self.radial_m.to_string());
        kv("shrink_factor", self.shrink_factor.to_string());
        kv("drlse_timestep", self.drlse.timestep.to_string());
        kv("drlse_mu", self.drlse.mu.to_string());
        kv("drlse_lambda", self.drlse.lambda.to_string());
        kv("drlse_alpha", self.drlse.alpha.to_string());
        kv("drlse_epsilon", self.drlse.epsilon.to_string());
        kv("drlse_iterations", self.drlse.iterations.to_string());
        kv("drlse_narrowband", self.drlse.narrowband_halfwidth.to_string());
        kv("drlse_c0", self.drlse.c0.to_string());
        kv("drlse_edge_sigma", self.drlse.edge_sigma.to_string());
        kv("ekf_p0", self.ekf.p0[(0, 0)].to_string());
        kv("ekf_q", self.ekf.q[(0, 0)].to_string());
        kv("ekf_r", self.ekf.r[(0, 0)].to_string());
        kv("pixel_pitch_mm", self.pixel_pitch_mm.to_string());
        kv("small_vessel_diameter_px", self.small_vessel_diameter_px.to_string());
        s
    }
}
