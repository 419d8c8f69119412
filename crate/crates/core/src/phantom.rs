//! Synthetic B-scan sequences with known lumen contours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::pipeline::ContourResult;
use crate::segmentation::EllipseParams;
use crate::tracking::SeedSource;

/// Rayleigh scale with unit mean, so speckle leaves mean intensity unchanged.
pub const UNIT_MEAN_RAYLEIGH_SCALE: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

/// Number of vertices on every truth contour.
pub const TRUTH_VERTICES: usize = 360;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Speckle {
    None,
    /// Multiplicative speckle: the mean of `looks` independent Rayleigh
    /// draws per pixel. One look is fully developed speckle; more looks
    /// model milder, compounded speckle with the same mean.
    Rayleigh {
        scale: f64,
        #[serde(default = "one_look")]
        looks: u32,
    },
}

fn one_look() -> u32 {
    1
}

impl Speckle {
    pub fn rayleigh(scale: f64) -> Self {
        Speckle::Rayleigh { scale, looks: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Still,
    /// Constant lateral velocity in px/frame.
    Drift { vx: f64, vy: f64 },
    /// Periodic squeeze: `a·c`, `b/c` with `c` rising from 1 to
    /// `1 + amplitude` and back over `period` frames. Area is preserved.
    Compression { amplitude: f64, period: f64 },
    /// Center offset applied from `frame` onwards.
    Jump { frame: usize, dx: f64, dy: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Lumen ellipse at frame 0.
    pub vessel: EllipseParams,
    pub lumen_intensity: f64,
    pub tissue_intensity: f64,
    /// Wall ring intensity as a multiple of the tissue intensity.
    pub wall_contrast: f64,
    pub wall_width: f64,
    pub speckle: Speckle,
    /// Motions compose: drifts and jumps add, compressions multiply.
    pub motion: Vec<Motion>,
    pub rng_seed: u64,
}

impl Default for PhantomSpec {
    /// 832×512, 100 frames, 70 px lumen drifting 2 px/frame.
    fn default() -> Self {
        Self {
            width: 832,
            height: 512,
            frames: 100,
            vessel: EllipseParams::circle(317.0, 256.0, 35.0),
            lumen_intensity: 25.0,
            tissue_intensity: 140.0,
            wall_contrast: 1.3,
            wall_width: 12.0,
            speckle: Speckle::rayleigh(UNIT_MEAN_RAYLEIGH_SCALE),
            motion: vec![Motion::Drift { vx: 2.0, vy: 0.0 }],
            rng_seed: 1,
        }
    }
}

impl PhantomSpec {
    /// Default sequence with a lateral jump of `dx` px at `frame` on top of
    /// the drift.
    pub fn with_jump(frame: usize, dx: f64) -> Self {
        let mut s = Self::default();
        s.vessel.cx -= dx / 2.0;
        s.motion.push(Motion::Jump { frame, dx, dy: 0.0 });
        s
    }

    /// Portrait 280×534 frames, 250 frames, 40 px lumen under slow drift
    /// and periodic compression.
    pub fn hfus() -> Self {
        Self {
            width: 280,
            height: 534,
            frames: 250,
            vessel: EllipseParams::circle(140.0, 267.0, 20.0),
            wall_width: 5.0,
            // HFUS speckle is much weaker than UHFUS
            speckle: Speckle::Rayleigh {
                scale: UNIT_MEAN_RAYLEIGH_SCALE,
                looks: 16,
            },
            motion: vec![
                Motion::Drift { vx: 0.1, vy: 0.1 },
                Motion::Compression {
                    amplitude: 0.15,
                    period: 60.0,
                },
            ],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.width < 8 || self.height < 8 {
            return Err(Error::ImageTooSmall {
                width: self.width,
                height: self.height,
                min: 8,
            });
        }
        if self.frames == 0 {
            return bad("phantom needs at least one frame");
        }
        if !self.vessel.is_valid() {
            return bad("vessel ellipse must satisfy a >= b > 0");
        }
        let wall = self.tissue_intensity * self.wall_contrast;
        for v in [self.lumen_intensity, self.tissue_intensity, wall] {
            if !(0.0..=255.0).contains(&v) {
                return bad("intensities must lie in [0, 255]");
            }
        }
        if !(self.wall_width >= 0.0) {
            return bad("wall width must be non-negative");
        }
        if let Speckle::Rayleigh { scale, looks } = self.speckle {
            if !(scale > 0.0) || looks == 0 {
                return bad("Rayleigh speckle needs scale > 0 and at least one look");
            }
        }
        for m in &self.motion {
            match *m {
                Motion::Compression { amplitude, period } if !(amplitude > -1.0 && period > 0.0) => {
                    return bad("compression needs amplitude > -1 and period > 0");
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Lumen ellipse at frame `t`.
    pub fn lumen_at(&self, t: usize) -> EllipseParams {
        let mut e = self.vessel;
        let tf = t as f64;
        for m in &self.motion {
            match *m {
                Motion::Still => {}
                Motion::Drift { vx, vy } => {
                    e.cx += vx * tf;
                    e.cy += vy * tf;
                }
                Motion::Compression { amplitude, period } => {
                    let c = 1.0
                        + amplitude * 0.5 * (1.0 - (2.0 * std::f64::consts::PI * tf / period).cos());
                    e.a *= c;
                    e.b /= c;
                }
                Motion::Jump { frame, dx, dy } => {
                    if t >= frame {
                        e.cx += dx;
                        e.cy += dy;
                    }
                }
            }
        }
        // a·c and b/c keep the major axis horizontal only while a >= b
        EllipseParams::new(e.cx, e.cy, e.a, e.b, e.theta)
    }
}

/// Half extents of the axis-aligned bounding box of an ellipse.
fn half_extents(e: &EllipseParams) -> (f64, f64) {
    let (s, c) = e.theta.sin_cos();
    (
        ((e.a * c).powi(2) + (e.b * s).powi(2)).sqrt(),
        ((e.a * s).powi(2) + (e.b * c).powi(2)).sqrt(),
    )
}

/// Approximate signed distance to the ellipse boundary (negative inside),
/// exact for circles.
fn signed_distance(e: &EllipseParams, x: f64, y: f64) -> f64 {
    let (s, c) = e.theta.sin_cos();
    let (dx, dy) = (x - e.cx, y - e.cy);
    let u = dx * c + dy * s;
    let v = -dx * s + dy * c;
    let r = ((u / e.a).powi(2) + (v / e.b).powi(2)).sqrt();
    if r == 0.0 {
        return -e.b;
    }
    let gu = u / (e.a * e.a * r);
    let gv = v / (e.b * e.b * r);
    (r - 1.0) / gu.hypot(gv)
}

fn coverage(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

/// Noise-free scene of frame `t`.
pub fn render_scene(spec: &PhantomSpec, lumen: &EllipseParams) -> GrayImage {
    let outer = EllipseParams {
        a: lumen.a + spec.wall_width,
        b: lumen.b + spec.wall_width,
        ..*lumen
    };
    let wall = spec.tissue_intensity * spec.wall_contrast;
    let (w, h) = (spec.width, spec.height);
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            (0..w).map(move |x| {
                let (xf, yf) = (x as f64, y as f64);
                let c_in = coverage(signed_distance(lumen, xf, yf));
                let c_out = coverage(signed_distance(&outer, xf, yf)).max(c_in);
                spec.lumen_intensity * c_in
                    + wall * (c_out - c_in)
                    + spec.tissue_intensity * (1.0 - c_out)
            })
        })
        .collect();
    GrayImage::new(w, h, data).expect("buffer sized from dims")
}

fn render_frame(spec: &PhantomSpec, t: usize) -> GrayImage {
    let lumen = spec.lumen_at(t);
    let mut img = render_scene(spec, &lumen);
    if let Speckle::Rayleigh { scale, looks } = spec.speckle {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        rng.set_stream(t as u64);
        for v in img.data_mut() {
            let mut acc = 0.0;
            for _ in 0..looks {
                // inverse CDF; 1 - u lies in (0, 1]
                let u: f64 = rng.random();
                acc += (-2.0 * (1.0 - u).ln()).sqrt();
            }
            *v *= scale * acc / looks as f64;
        }
    }
    // frames are stored as 8-bit data, so quantize here
    img.map(|v| v.round().clamp(0.0, 255.0))
}

/// Render all frames and the truth lumen contours. Frames are independent
/// and rendered in parallel, each from its own RNG stream.
pub fn generate(spec: &PhantomSpec) -> Result<(Vec<GrayImage>, Vec<ContourResult>)> {
    spec.validate()?;
    let mut truth = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let lumen = spec.lumen_at(t);
        let (hx, hy) = half_extents(&lumen);
        let margin = 2.0 * spec.wall_width;
        if lumen.cx - hx - margin < 0.0
            || lumen.cy - hy - margin < 0.0
            || lumen.cx + hx + margin > (spec.width - 1) as f64
            || lumen.cy + hy + margin > (spec.height - 1) as f64
        {
            return Err(Error::VesselOutOfBounds { frame: t });
        }
        truth.push(ContourResult {
            frame_index: t,
            points: lumen.sample(TRUTH_VERTICES),
            ellipse: lumen,
            seed: lumen.center(),
            seed_used: SeedSource::Manual,
        });
    }
    let frames = (0..spec.frames)
        .into_par_iter()
        .map(|t| render_frame(spec, t))
        .collect();
    Ok((frames, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomSpec {
        PhantomSpec {
            width: 160,
            height: 120,
            frames: 4,
            vessel: EllipseParams::circle(80.0, 60.0, 20.0),
            wall_width: 5.0,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn still_noise_free_frames_are_identical() {
        let spec = PhantomSpec {
            speckle: Speckle::None,
            motion: vec![Motion::Still],
            ..small()
        };
        let (frames, truth) = generate(&spec).unwrap();
        assert!(frames.windows(2).all(|w| w[0] == w[1]));
        assert!(truth.windows(2).all(|w| w[0].ellipse == w[1].ellipse));
        assert_eq!(truth[0].points.len(), 360);
        let f = &frames[0];
        assert_eq!(f.get(80, 60), 25.0);
        assert_eq!(f.get(2, 2), 140.0);
        assert_eq!(f.get(80 + 22, 60), 182.0);
    }

    #[test]
    fn jump_offsets_truth_exactly() {
        let spec = PhantomSpec {
            frames: 60,
            motion: vec![Motion::Jump { frame: 50, dx: 40.0, dy: 0.0 }],
            width: 300,
            vessel: EllipseParams::circle(100.0, 60.0, 20.0),
            speckle: Speckle::None,
            ..small()
        };
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth[50].ellipse.cx - truth[49].ellipse.cx, 40.0);
        assert_eq!(truth[50].ellipse.cy, truth[49].ellipse.cy);
    }

    #[test]
    fn rayleigh_speckle_mean() {
        for (scale, looks) in [(UNIT_MEAN_RAYLEIGH_SCALE, 1), (1.0, 1), (1.0, 9)] {
            let spec = PhantomSpec {
                width: 200,
                height: 200,
                frames: 1,
                vessel: EllipseParams::circle(100.0, 100.0, 70.0),
                wall_width: 10.0,
                speckle: Speckle::Rayleigh { scale, looks },
                motion: vec![Motion::Still],
                ..PhantomSpec::default()
            };
            let (frames, _) = generate(&spec).unwrap();
            let inner = EllipseParams::circle(100.0, 100.0, 65.0);
            let vals: Vec<f64> = (0..200)
                .flat_map(|y| (0..200).map(move |x| (x, y)))
                .filter(|&(x, y)| inner.contains(crate::image::Point::new(x as f64, y as f64)))
                .map(|(x, y)| frames[0].get(x, y))
                .collect();
            assert!(vals.len() >= 10_000);
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let expected = 25.0 * scale * (std::f64::consts::PI / 2.0).sqrt();
            assert!((mean - expected).abs() / expected < 0.02, "{mean} vs {expected}");
            // coefficient of variation of a Rayleigh variable, shrinking as 1/sqrt(looks)
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            let cv = var.sqrt() / mean;
            let want = ((4.0 - std::f64::consts::PI) / std::f64::consts::PI).sqrt() / (looks as f64).sqrt();
            assert!((cv - want).abs() / want < 0.05, "looks {looks}: cv {cv} vs {want}");
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let (a, _) = generate(&small()).unwrap();
        let (b, _) = generate(&small()).unwrap();
        assert_eq!(a, b);
        let other = PhantomSpec {
            rng_seed: 2,
            ..small()
        };
        let (c, _) = generate(&other).unwrap();
        assert_ne!(a, c);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn compression_preserves_area() {
        let spec = PhantomSpec {
            vessel: EllipseParams::new(80.0, 60.0, 22.0, 18.0, 0.0),
            motion: vec![Motion::Compression {
                amplitude: 0.2,
                period: 20.0,
            }],
            frames: 21,
            ..small()
        };
        let base = spec.lumen_at(0);
        let squeezed = spec.lumen_at(10);
        assert!(squeezed.a > base.a && squeezed.b < base.b);
        assert!((squeezed.area() - base.area()).abs() / base.area() < 0.05);
        generate(&spec).unwrap();
    }

    #[test]
    fn leaving_the_image_is_an_error() {
        let spec = PhantomSpec {
            frames: 40,
            motion: vec![Motion::Drift { vx: 3.0, vy: 0.0 }],
            ..small()
        };
        assert!(matches!(generate(&spec), Err(Error::VesselOutOfBounds { .. })));
    }

    #[test]
    fn default_presets_fit() {
        let spec = PhantomSpec::default();
        for t in [0, spec.frames - 1] {
            let e = spec.lumen_at(t);
            assert!(e.cx - e.a > 2.0 * spec.wall_width);
            assert!(e.cx + e.a < spec.width as f64 - 2.0 * spec.wall_width);
        }
        assert_eq!(2.0 * spec.vessel.a, 70.0);
        PhantomSpec::hfus().validate().unwrap();
        let j = PhantomSpec::with_jump(50, 40.0);
        assert!(j.lumen_at(99).cx + j.lumen_at(99).a < 832.0);
    }
}
