//! Downsampling, bilateral smoothing and variance-root patch clustering.
//!
//! Clustering is root finding on local variance: every
//! pixel gets a local mean and variance over a circular neighborhood, then
//! links to the lowest-variance pixel in that neighborhood. Following links
//! ends at a root, and all pixels ending at the same root form a patch.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};

/// Block-mean downsampling by an integer factor in both dimensions.
pub fn downsample(img: &GrayImage, factor: usize) -> Result<GrayImage> {
    if factor == 0 {
        return Err(Error::InvalidParameter("downsample factor must be >= 1".into()));
    }
    if img.width() < factor || img.height() < factor {
        return Err(Error::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min: factor,
        });
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let ow = img.width() / factor;
    let oh = img.height() / factor;
    let norm = (factor * factor) as f64;
    let data: Vec<f64> = (0..oh)
        .into_par_iter()
        .flat_map_iter(|oy| {
            (0..ow).map(move |ox| {
                let mut acc = 0.0;
                for y in oy * factor..(oy + 1) * factor {
                    let row = img.row(y);
                    acc += row[ox * factor..(ox + 1) * factor].iter().sum::<f64>();
                }
                acc / norm
            })
        })
        .collect();
    GrayImage::new(ow, oh, data)
}

fn check_kernel(kernel: usize) -> Result<()> {
    if kernel < 3 || kernel % 2 == 0 {
        return Err(Error::BadKernel(kernel));
    }
    Ok(())
}

/// Gaussian bilateral filter over a `kernel`×`kernel` window with
/// clamp-to-edge borders.
pub fn bilateral_filter(
    img: &GrayImage,
    kernel: usize,
    sigma_spatial: f64,
    sigma_range: f64,
) -> Result<GrayImage> {
    check_kernel(kernel)?;
    if !(sigma_spatial > 0.0) || !(sigma_range > 0.0) {
        return Err(Error::InvalidParameter("bilateral sigmas must be positive".into()));
    }
    let r = (kernel / 2) as isize;
    let mut spatial = Vec::with_capacity(kernel * kernel);
    for dy in -r..=r {
        for dx in -r..=r {
            let d2 = (dx * dx + dy * dy) as f64;
            spatial.push((dx, dy, (-d2 / (2.0 * sigma_spatial * sigma_spatial)).exp()));
        }
    }
    let inv_2sr2 = 1.0 / (2.0 * sigma_range * sigma_range);
    let (w, h) = img.dims();
    let data: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let spatial = &spatial;
            (0..w).map(move |x| {
                let center = img.get(x, y);
                let mut num = 0.0;
                let mut den = 0.0;
                for &(dx, dy, ws) in spatial {
                    let v = img.get_clamped(x as isize + dx, y as isize + dy);
                    let d = v - center;
                    let wgt = ws * (-d * d * inv_2sr2).exp();
                    num += wgt * v;
                    den += wgt;
                }
                num / den
            })
        })
        .collect();
    GrayImage::new(w, h, data)
}

/// Offsets of the circular neighborhood inscribed in a `kernel` window:
/// center distance <= kernel/2.
pub fn circular_offsets(kernel: usize) -> Vec<(isize, isize)> {
    let r = (kernel / 2) as isize;
    let lim = kernel as f64 / 2.0;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if ((dx * dx + dy * dy) as f64).sqrt() <= lim {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Per-pixel patch assignment (`I_C`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterMap {
    pub width: usize,
    pub height: usize,
    /// Row-major index of the root reached from each pixel.
    pub root_of: Vec<usize>,
    /// Mean intensity of each patch, parallel to `roots`.
    pub patch_mean: Vec<f64>,
    /// Row-major root indices in increasing order.
    pub roots: Vec<usize>,
}

impl ClusterMap {
    pub fn root_point(&self, k: usize) -> Point {
        let idx = self.roots[k];
        Point::new((idx % self.width) as f64, (idx / self.width) as f64)
    }

    /// Position of `root` in `roots`, if it is one.
    pub fn root_slot(&self, root: usize) -> Option<usize> {
        self.roots.binary_search(&root).ok()
    }

    /// Copy of the map with one patch's root dropped from the candidate list.
    pub fn without_root(&self, root: usize) -> Self {
        let mut out = self.clone();
        if let Some(k) = out.root_slot(root) {
            out.roots.remove(k);
            out.patch_mean.remove(k);
        }
        out
    }
}

/// Local mean and variance over the circular neighborhood of every pixel.
pub fn local_stats(img: &GrayImage, kernel: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_kernel(kernel)?;
    let offsets = circular_offsets(kernel);
    let n = offsets.len() as f64;
    let (w, h) = img.dims();
    let stats: Vec<(f64, f64)> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let offsets = &offsets;
            (0..w).map(move |x| {
                let mut sum = 0.0;
                for &(dx, dy) in offsets {
                    sum += img.get_clamped(x as isize + dx, y as isize + dy);
                }
                let mean = sum / n;
                let mut ss = 0.0;
                for &(dx, dy) in offsets {
                    let d = img.get_clamped(x as isize + dx, y as isize + dy) - mean;
                    ss += d * d;
                }
                (mean, ss / n)
            })
        })
        .collect();
    Ok(stats.into_iter().unzip())
}

/// Cluster pixels into homogeneous patches rooted at local variance minima.
///
/// Each pixel links to the in-bounds pixel of its circular neighborhood with
/// the lowest variance. Ties prefer the pixel itself, then the lower
/// row-major index, so links only ever go to strictly lower variance and
/// chains always terminate.
pub fn cluster(img: &GrayImage, kernel: usize) -> Result<ClusterMap> {
    let (_, var) = local_stats(img, kernel)?;
    let offsets = circular_offsets(kernel);
    let (w, h) = img.dims();

    let link: Vec<usize> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let var = &var;
            let offsets = &offsets;
            (0..w).map(move |x| {
                let me = y * w + x;
                let mut best = me;
                let mut best_var = var[me];
                for &(dx, dy) in offsets {
                    let nx = x as isize + dx;
                    let ny = y as isize + dy;
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if j == me {
                        continue;
                    }
                    let v = var[j];
                    let better = v < best_var || (v == best_var && best != me && j < best);
                    if better {
                        best = j;
                        best_var = v;
                    }
                }
                best
            })
        })
        .collect();

    // Resolve chains with path compression; variance strictly decreases
    // along every link so each chain ends at a fixed point.
    let mut root_of = vec![usize::MAX; w * h];
    let mut stack = Vec::new();
    for start in 0..w * h {
        if root_of[start] != usize::MAX {
            continue;
        }
        let mut cur = start;
        while root_of[cur] == usize::MAX && link[cur] != cur {
            stack.push(cur);
            cur = link[cur];
        }
        let root = if link[cur] == cur { cur } else { root_of[cur] };
        root_of[cur] = root;
        for p in stack.drain(..) {
            root_of[p] = root;
        }
    }

    let roots: Vec<usize> = (0..w * h).filter(|&i| root_of[i] == i).collect();
    let mut sums = vec![0.0; roots.len()];
    let mut counts = vec![0usize; roots.len()];
    let data = img.data();
    for (i, &r) in root_of.iter().enumerate() {
        let k = roots.binary_search(&r).expect("root listed");
        sums[k] += data[i];
        counts[k] += 1;
    }
    let patch_mean = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();

    Ok(ClusterMap {
        width: w,
        height: h,
        root_of,
        patch_mean,
        roots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_bilateral(img: &GrayImage, k: usize, ss: f64, sr: f64) -> GrayImage {
        let r = (k / 2) as isize;
        GrayImage::from_fn(img.width(), img.height(), |x, y| {
            let c = img.get(x, y);
            let (mut num, mut den) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = img.get_clamped(x as isize + dx, y as isize + dy);
                    let w = (-((dx * dx + dy * dy) as f64) / (2.0 * ss * ss)).exp()
                        * (-(v - c) * (v - c) / (2.0 * sr * sr)).exp();
                    num += w * v;
                    den += w;
                }
            }
            num / den
        })
    }

    #[test]
    fn downsample_dims_for_uhfus_frame() {
        let img = GrayImage::filled(832, 512, 1.0);
        assert_eq!(downsample(&img, 4).unwrap().dims(), (208, 128));
    }

    #[test]
    fn downsample_constant_block() {
        let img = GrayImage::filled(4, 4, 10.0);
        let out = downsample(&img, 4).unwrap();
        assert_eq!(out.dims(), (1, 1));
        assert_eq!(out.get(0, 0), 10.0);
    }

    #[test]
    fn downsample_two_blocks() {
        let img = GrayImage::from_fn(8, 4, |x, _| if x < 4 { 0.0 } else { 100.0 });
        let out = downsample(&img, 4).unwrap();
        assert_eq!(out.data(), &[0.0, 100.0]);
    }

    #[test]
    fn downsample_rejects_small_input() {
        let img = GrayImage::filled(3, 8, 1.0);
        assert!(matches!(downsample(&img, 4), Err(Error::ImageTooSmall { .. })));
    }

    #[test]
    fn bilateral_constant_is_identity() {
        let img = GrayImage::filled(9, 7, 42.0);
        let out = bilateral_filter(&img, 5, 2.0, 25.0).unwrap();
        assert!(out.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn bilateral_matches_brute_force_and_keeps_step_crossing() {
        let img = GrayImage::from_fn(16, 6, |x, _| if x < 8 { 0.0 } else { 255.0 });
        let out = bilateral_filter(&img, 5, 2.0, 25.0).unwrap();
        let oracle = brute_bilateral(&img, 5, 2.0, 25.0);
        for (a, b) in out.data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-9);
        }
        for y in 0..6 {
            let row = out.row(y);
            let crossing = (0..15).find(|&x| row[x] < 127.5 && row[x + 1] >= 127.5);
            assert_eq!(crossing, Some(7));
        }
    }

    #[test]
    fn bilateral_reduces_impulse() {
        let mut img = GrayImage::filled(9, 9, 0.0);
        img.set(4, 4, 255.0);
        // at sigma_range 25 the neighbour weights underflow next to 1.0
        let out = bilateral_filter(&img, 5, 2.0, 100.0).unwrap();
        let oracle = brute_bilateral(&img, 5, 2.0, 100.0);
        assert!(out.get(4, 4) < 255.0);
        assert!((out.get(4, 4) - oracle.get(4, 4)).abs() < 1e-9);
    }

    #[test]
    fn bilateral_rejects_even_kernel() {
        let img = GrayImage::filled(9, 9, 0.0);
        assert!(matches!(bilateral_filter(&img, 4, 1.0, 1.0), Err(Error::BadKernel(4))));
    }

    #[test]
    fn circular_neighborhoods() {
        assert_eq!(circular_offsets(3).len(), 9);
        // radius 3.5 inside a 7x7 window drops the four corner triples
        assert_eq!(circular_offsets(7).len(), 37);
    }

    #[test]
    fn cluster_constant_image_every_pixel_is_root() {
        let img = GrayImage::filled(6, 5, 17.0);
        let cm = cluster(&img, 3).unwrap();
        assert_eq!(cm.roots.len(), 30);
        assert!(cm.root_of.iter().enumerate().all(|(i, &r)| r == i));
    }

    fn two_region_image() -> GrayImage {
        // smooth-ish texture inside each region so roots are not everywhere
        GrayImage::from_fn(24, 16, |x, y| {
            let base = if x < 12 { 30.0 } else { 200.0 };
            base + ((x * 7 + y * 13) % 5) as f64
        })
    }

    // Independent oracle: recompute links by brute force and follow them.
    fn brute_roots(img: &GrayImage, k: usize) -> Vec<usize> {
        let offs = circular_offsets(k);
        let (w, h) = img.dims();
        let var: Vec<f64> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                let vals: Vec<f64> = offs
                    .iter()
                    .map(|&(dx, dy)| img.get_clamped(x + dx, y + dy))
                    .collect();
                let m = vals.iter().sum::<f64>() / vals.len() as f64;
                vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / vals.len() as f64
            })
            .collect();
        let link: Vec<usize> = (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                let mut cands: Vec<usize> = offs
                    .iter()
                    .filter_map(|&(dx, dy)| {
                        let (nx, ny) = (x + dx, y + dy);
                        (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize)
                            .then(|| ny as usize * w + nx as usize)
                    })
                    .collect();
                cands.sort_by(|&a, &b| {
                    var[a]
                        .partial_cmp(&var[b])
                        .unwrap()
                        .then((a != i).cmp(&(b != i)))
                        .then(a.cmp(&b))
                });
                cands[0]
            })
            .collect();
        (0..w * h)
            .map(|mut i| {
                while link[i] != i {
                    i = link[i];
                }
                i
            })
            .collect()
    }

    #[test]
    fn cluster_matches_link_following_oracle_and_respects_edge() {
        let img = two_region_image();
        let cm = cluster(&img, 3).unwrap();
        assert_eq!(cm.root_of, brute_roots(&img, 3));
        for (i, &r) in cm.root_of.iter().enumerate() {
            assert_eq!(i % 24 < 12, r % 24 < 12, "patch of pixel {i} spans the edge");
        }
        assert!(cm.roots.iter().any(|&r| r % 24 < 12));
        assert!(cm.roots.iter().any(|&r| r % 24 >= 12));
    }

    #[test]
    fn larger_kernel_gives_no_more_roots() {
        let img = two_region_image();
        let small = cluster(&img, 3).unwrap();
        let large = cluster(&img, 7).unwrap();
        assert!(large.roots.len() <= small.roots.len());
    }

    proptest! {
        #[test]
        fn downsample_preserves_mean(vals in proptest::collection::vec(0.0f64..255.0, 64)) {
            let img = GrayImage::new(8, 8, vals).unwrap();
            let out = downsample(&img, 2).unwrap();
            let rel = (out.mean() - img.mean()).abs() / img.mean().max(1e-12);
            prop_assert!(rel < 1e-9);
        }

        #[test]
        fn bilateral_stays_within_window_range(vals in proptest::collection::vec(0.0f64..255.0, 100)) {
            let img = GrayImage::new(10, 10, vals).unwrap();
            let out = bilateral_filter(&img, 5, 2.0, 25.0).unwrap();
            for y in 0..10 {
                for x in 0..10 {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for dy in -2..=2isize {
                        for dx in -2..=2isize {
                            let v = img.get_clamped(x as isize + dx, y as isize + dy);
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let v = out.get(x, y);
                    prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }

        #[test]
        fn cluster_roots_are_fixed_points_and_means_bounded(
            vals in proptest::collection::vec(0.0f64..255.0, 144),
            big in proptest::bool::ANY,
        ) {
            let img = GrayImage::new(12, 12, vals).unwrap();
            let cm = cluster(&img, if big { 7 } else { 3 }).unwrap();
            for &r in &cm.roots {
                prop_assert_eq!(cm.root_of[r], r);
            }
            for (k, &r) in cm.roots.iter().enumerate() {
                let members: Vec<f64> = (0..144).filter(|&i| cm.root_of[i] == r).map(|i| img.data()[i]).collect();
                let lo = members.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = members.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(cm.patch_mean[k] >= lo - 1e-9 && cm.patch_mean[k] <= hi + 1e-9);
            }
        }
    }
}
