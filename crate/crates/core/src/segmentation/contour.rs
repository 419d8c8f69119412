//! Sub-pixel zero level set extraction by marching squares.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::signed_area;
use crate::image::{GrayImage, Point};

use super::levelset::LevelSetField;

/// 4-connected labels of the negative region; returns (labels, sizes).
fn label_negative(phi: &GrayImage) -> (Vec<usize>, Vec<usize>) {
    let (w, h) = phi.dims();
    let d = phi.data();
    let mut labels = vec![usize::MAX; w * h];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if d[start] >= 0.0 || labels[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut count = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(i) = stack.pop() {
            count += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if d[j] < 0.0 && labels[j] == usize::MAX {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(count);
    }
    (labels, sizes)
}

/// Counterclockwise (in the (x, y) frame) sub-pixel boundary of the largest
/// negative region of φ. Smaller negative components are discarded.
pub fn extract_contour(phi: &LevelSetField) -> Result<Vec<Point>> {
    let field = phi.phi();
    let (w, h) = field.dims();
    let has_neg = field.data().iter().any(|&v| v < 0.0);
    let has_pos = field.data().iter().any(|&v| v >= 0.0);
    if !has_neg || !has_pos || field.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NoZeroCrossing);
    }

    let (labels, sizes) = label_negative(field);
    let keep = sizes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .map(|(i, _)| i)
        .expect("at least one component");

    // pad by one positive pixel on every side so boundary-touching regions close
    let (pw, ph) = (w + 2, h + 2);
    let mut pad = vec![1.0; pw * ph];
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let v = field.data()[i];
            pad[(y + 1) * pw + x + 1] = if v < 0.0 && labels[i] != keep {
                v.abs()
            } else {
                v
            };
        }
    }
    let val = |x: usize, y: usize| pad[y * pw + x];

    // edge ids: 2*(y*pw+x) horizontal to (x+1,y), +1 vertical to (x,y+1)
    let h_edge = |x: usize, y: usize| 2 * (y * pw + x);
    let v_edge = |x: usize, y: usize| 2 * (y * pw + x) + 1;
    let mut points: HashMap<usize, Point> = HashMap::new();
    let mut links: HashMap<usize, Vec<usize>> = HashMap::new();
    let interp = |a: (usize, usize), b: (usize, usize)| {
        let va = val(a.0, a.1);
        let vb = val(b.0, b.1);
        let t = va / (va - vb);
        Point::new(
            a.0 as f64 + t * (b.0 as f64 - a.0 as f64),
            a.1 as f64 + t * (b.1 as f64 - a.1 as f64),
        )
    };

    for y in 0..ph - 1 {
        for x in 0..pw - 1 {
            let c = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1)];
            let inside: Vec<bool> = c.iter().map(|&(cx, cy)| val(cx, cy) < 0.0).collect();
            let case = inside
                .iter()
                .enumerate()
                .fold(0u8, |acc, (k, &b)| acc | (u8::from(b) << k));
            if case == 0 || case == 15 {
                continue;
            }
            // edges: 0 top, 1 right, 2 bottom, 3 left
            let ids = [h_edge(x, y), v_edge(x + 1, y), h_edge(x, y + 1), v_edge(x, y)];
            let ends = [(c[0], c[1]), (c[1], c[2]), (c[3], c[2]), (c[0], c[3])];
            let center_inside = c.iter().map(|&(cx, cy)| val(cx, cy)).sum::<f64>() < 0.0;
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(3, 2)],
                5 => {
                    if center_inside {
                        &[(0, 1), (2, 3)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                10 => {
                    if center_inside {
                        &[(3, 0), (1, 2)]
                    } else {
                        &[(0, 1), (2, 3)]
                    }
                }
                _ => unreachable!(),
            };
            for &(e1, e2) in pairs {
                for e in [e1, e2] {
                    points
                        .entry(ids[e])
                        .or_insert_with(|| interp(ends[e].0, ends[e].1));
                }
                links.entry(ids[e1]).or_default().push(ids[e2]);
                links.entry(ids[e2]).or_default().push(ids[e1]);
            }
        }
    }

    // walk loops in a deterministic order
    let mut starts: Vec<usize> = links.keys().copied().collect();
    starts.sort_unstable();
    let mut visited: HashMap<usize, bool> = HashMap::new();
    let mut best: Option<Vec<Point>> = None;
    for s in starts {
        if visited.contains_key(&s) {
            continue;
        }
        let mut ring = Vec::new();
        let mut prev = usize::MAX;
        let mut cur = s;
        loop {
            visited.insert(cur, true);
            ring.push(points[&cur]);
            let next = links[&cur]
                .iter()
                .copied()
                .find(|&n| n != prev && !visited.contains_key(&n));
            match next {
                Some(n) => {
                    prev = cur;
                    cur = n;
                }
                None => break,
            }
        }
        let better = best
            .as_ref()
            .map_or(true, |b| signed_area(&ring).abs() > signed_area(b).abs());
        if better {
            best = Some(ring);
        }
    }
    let mut ring = best.ok_or(Error::NoZeroCrossing)?;

    // back to image coordinates
    for p in ring.iter_mut() {
        p.x = (p.x - 1.0).clamp(0.0, (w - 1) as f64);
        p.y = (p.y - 1.0).clamp(0.0, (h - 1) as f64);
    }
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(Error::NoZeroCrossing);
    }
    if signed_area(&ring) < 0.0 {
        ring.reverse();
    }
    Ok(ring)
}
