//! Frame loading, contour files and overlay rendering.
//!
//! Contour file layout (one record per line, whitespace separated):
//!
//! ```text
//! # vesseltrack contours v1
//! # dims <width> <height>
//! # frame seed_used seed_x seed_y cx cy a b theta n x_0 y_0 ... x_{n-1} y_{n-1}
//! 0 manual 317 256 317.02 255.98 34.9 34.7 0.12 212 ...
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the written values exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ImageEncoder, ImageReader, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::image::{GrayImage, Point};
use crate::pipeline::ContourResult;
use crate::segmentation::EllipseParams;
use crate::tracking::SeedSource;

const FRAME_EXTENSIONS: [&str; 3] = ["pgm", "png", "pnm"];

fn is_frame_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| FRAME_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Frame files of `dir` in lexicographic file-name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_frame_file(p))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDirectory(dir.to_path_buf()));
    }
    Ok(files)
}

/// Read one 8-bit grayscale PGM or PNG file.
pub fn read_frame(path: &Path) -> Result<GrayImage> {
    let unsupported = |detail: String| Error::UnsupportedPixelFormat {
        path: path.to_path_buf(),
        detail,
    };
    let img = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()
        .map_err(|e| unsupported(e.to_string()))?;
    match img {
        image::DynamicImage::ImageLuma8(g) => {
            GrayImage::from_u8(g.width() as usize, g.height() as usize, g.as_raw())
        }
        other => Err(unsupported(format!(
            "expected 8-bit grayscale, found {:?}",
            other.color()
        ))),
    }
}

/// Load every frame of a directory; all frames must share dimensions.
pub fn load_sequence(dir: &Path) -> Result<Vec<GrayImage>> {
    let files = list_frames(dir)?;
    let mut frames: Vec<GrayImage> = Vec::with_capacity(files.len());
    for path in files {
        let f = read_frame(&path)?;
        if let Some(first) = frames.first() {
            if first.dims() != f.dims() {
                return Err(Error::MixedDimensions {
                    path,
                    expected: first.dims(),
                    got: f.dims(),
                });
            }
        }
        frames.push(f);
    }
    Ok(frames)
}

/// Binary PGM, values rounded and saturated to 8 bits.
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let file = BufWriter::new(fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(
            &img.to_u8(),
            img.width() as u32,
            img.height() as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

/// Write frames as `frame_0000.pgm`, `frame_0001.pgm`, ... into `dir`.
pub fn write_sequence(frames: &[GrayImage], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let p = dir.join(format!("frame_{i:04}.pgm"));
            write_pgm(f, &p).map(|_| p)
        })
        .collect()
}

/// Parsed contour file.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourFile {
    pub dims: Option<(usize, usize)>,
    pub results: Vec<ContourResult>,
}

pub fn format_contours(results: &[ContourResult], dims: Option<(usize, usize)>) -> String {
    let mut s = String::from("# vesseltrack contours v1\n");
    if let Some((w, h)) = dims {
        let _ = writeln!(s, "# dims {w} {h}");
    }
    s.push_str("# frame seed_used seed_x seed_y cx cy a b theta n x_0 y_0 ...\n");
    for r in results {
        let e = &r.ellipse;
        let _ = write!(
            s,
            "{} {} {} {} {} {} {} {} {} {}",
            r.frame_index,
            r.seed_used.as_str(),
            r.seed.x,
            r.seed.y,
            e.cx,
            e.cy,
            e.a,
            e.b,
            e.theta,
            r.points.len()
        );
        for p in &r.points {
            let _ = write!(s, " {} {}", p.x, p.y);
        }
        s.push('\n');
    }
    s
}

pub fn parse_contours(text: &str) -> Result<ContourFile> {
    let mut dims = None;
    let mut results = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        let err = |m: &str| Error::Parse(format!("contour line {}: {m}", n + 1));
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut it = rest.split_whitespace();
            if it.next() == Some("dims") {
                let w = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad dims"))?;
                let h = it.next().and_then(|v| v.parse().ok()).ok_or_else(|| err("bad dims"))?;
                dims = Some((w, h));
            }
            continue;
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 10 {
            return Err(err("too few fields"));
        }
        let f = |i: usize| -> Result<f64> {
            tok[i].parse().map_err(|_| err(&format!("bad number '{}'", tok[i])))
        };
        let frame_index = tok[0].parse().map_err(|_| err("bad frame index"))?;
        let seed_used = SeedSource::parse(tok[1]).ok_or_else(|| err("bad seed_used"))?;
        let count: usize = tok[9].parse().map_err(|_| err("bad vertex count"))?;
        if tok.len() != 10 + 2 * count {
            return Err(err(&format!("expected {count} vertices")));
        }
        let points = (0..count)
            .map(|k| Ok(Point::new(f(10 + 2 * k)?, f(11 + 2 * k)?)))
            .collect::<Result<Vec<_>>>()?;
        results.push(ContourResult {
            frame_index,
            seed_used,
            seed: Point::new(f(2)?, f(3)?),
            ellipse: EllipseParams {
                cx: f(4)?,
                cy: f(5)?,
                a: f(6)?,
                b: f(7)?,
                theta: f(8)?,
            },
            points,
        });
    }
    Ok(ContourFile { dims, results })
}

pub fn write_contours(
    results: &[ContourResult],
    dims: Option<(usize, usize)>,
    path: &Path,
) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(format_contours(results, dims).as_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_contours(path: &Path) -> Result<ContourFile> {
    parse_contours(&fs::read_to_string(path)?)
}

pub const ESTIMATE_COLOR: [u8; 3] = [255, 220, 0];
pub const TRUTH_COLOR: [u8; 3] = [0, 200, 80];
pub const SEED_COLOR: [u8; 3] = [255, 0, 255];

/// The closed polyline of a contour: one segment per vertex, the last
/// joining back to the first.
pub fn polyline_segments(points: &[Point]) -> Vec<(Point, Point)> {
    let n = points.len();
    (0..n).map(|i| (points[i], points[(i + 1) % n])).collect()
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Rgb(c));
    }
}

fn draw_segment(img: &mut RgbImage, a: Point, b: Point, c: [u8; 3]) {
    let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = a.x + t * (b.x - a.x);
        let y = a.y + t * (b.y - a.y);
        put(img, x.round() as i64, y.round() as i64, c);
    }
}

fn draw_marker(img: &mut RgbImage, p: Point, c: [u8; 3]) {
    let (x, y) = (p.x.round() as i64, p.y.round() as i64);
    for d in -3..=3 {
        put(img, x + d, y, c);
        put(img, x, y + d, c);
    }
}

/// Grayscale frame with the estimated contour and its seed burned in, plus
/// the truth contour when given.
pub fn render_overlay(
    frame: &GrayImage,
    estimate: &ContourResult,
    truth: Option<&ContourResult>,
) -> RgbImage {
    let gray = frame.to_u8();
    let (w, h) = frame.dims();
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = gray[y as usize * w + x as usize];
        Rgb([v, v, v])
    });
    if let Some(t) = truth {
        for (a, b) in polyline_segments(&t.points) {
            draw_segment(&mut img, a, b, TRUTH_COLOR);
        }
    }
    for (a, b) in polyline_segments(&estimate.points) {
        draw_segment(&mut img, a, b, ESTIMATE_COLOR);
    }
    draw_marker(&mut img, estimate.seed, SEED_COLOR);
    img
}

pub fn write_overlay(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn result(i: usize, n: usize) -> ContourResult {
        let e = EllipseParams::new(100.0 + i as f64 / 3.0, 60.1, 20.0 / 7.0, 1.0 / 3.0, 0.3);
        ContourResult {
            frame_index: i,
            points: e.sample(n),
            ellipse: e,
            seed: Point::new(0.1 + i as f64, 1e-17),
            seed_used: [SeedSource::Manual, SeedSource::Ekf, SeedSource::Cluster][i % 3],
        }
    }

    #[test]
    fn contour_round_trip_is_exact() {
        let dir = tempdir().unwrap();
        let p = dir.path().join("c.txt");
        let rs: Vec<_> = (0..100).map(|i| result(i, 37)).collect();
        write_contours(&rs, Some((832, 512)), &p).unwrap();
        let back = read_contours(&p).unwrap();
        assert_eq!(back.dims, Some((832, 512)));
        assert_eq!(back.results, rs);
    }

    #[test]
    fn empty_list_gives_header_only() {
        let text = format_contours(&[], None);
        assert!(text.starts_with("# vesseltrack"));
        assert!(parse_contours(&text).unwrap().results.is_empty());
    }

    #[test]
    fn record_has_all_vertices() {
        let text = format_contours(&[result(0, 360)], None);
        let line = text.lines().last().unwrap();
        assert_eq!(line.split_whitespace().count(), 10 + 720);
        assert!(parse_contours(&text.replace(" 360 ", " 359 ")).is_err());
    }

    #[test]
    fn sequence_round_trip_and_errors() {
        let dir = tempdir().unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::EmptyDirectory(_))));
        let a = GrayImage::from_fn(12, 9, |x, y| (x * 20 + y) as f64);
        write_sequence(&[a.clone(), a.clone()], dir.path()).unwrap();
        fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let frames = load_sequence(dir.path()).unwrap();
        assert_eq!(frames, vec![a.clone(), a.clone()]);

        let b = GrayImage::filled(10, 9, 7.0);
        write_pgm(&b, &dir.path().join("frame_0002.pgm")).unwrap();
        assert!(matches!(load_sequence(dir.path()), Err(Error::MixedDimensions { .. })));
    }

    #[test]
    fn png_and_ascii_pgm_are_accepted() {
        let dir = tempdir().unwrap();
        let g = image::GrayImage::from_fn(9, 8, |x, y| image::Luma([(x * 10 + y) as u8]));
        g.save(dir.path().join("a.png")).unwrap();
        let mut ascii = String::from("P2\n9 8\n255\n");
        for y in 0..8 {
            for x in 0..9 {
                ascii.push_str(&format!("{} ", x * 10 + y));
            }
            ascii.push('\n');
        }
        fs::write(dir.path().join("b.pgm"), ascii).unwrap();
        let frames = load_sequence(dir.path()).unwrap();
        assert_eq!(frames[0], frames[1]);
        assert_eq!(frames[0].get(3, 2), 32.0);
    }

    #[test]
    fn color_png_is_unsupported() {
        let dir = tempdir().unwrap();
        RgbImage::new(9, 9).save(dir.path().join("x.png")).unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::UnsupportedPixelFormat { .. })
        ));
    }

    #[test]
    fn overlay_uses_distinct_colors() {
        let frame = GrayImage::filled(200, 120, 90.0);
        let est = result(1, 24);
        let mut truth = result(1, 24);
        truth.points = EllipseParams::circle(60.0, 60.0, 30.0).sample(60);
        let img = render_overlay(&frame, &est, Some(&truth));
        assert_eq!(polyline_segments(&est.points).len(), 24);
        let count = |c: [u8; 3]| img.pixels().filter(|p| p.0 == c).count();
        assert!(count(TRUTH_COLOR) > 100);
        assert!(count(ESTIMATE_COLOR) > 0);
        let s = est.seed;
        assert_eq!(img.get_pixel(s.x.round() as u32 + 2, s.y.round() as u32).0, SEED_COLOR);
        assert_ne!(TRUTH_COLOR, ESTIMATE_COLOR);
    }
}
