use vesseltrack_core::geometry::point_in_polygon;
use vesseltrack_core::io::{load_sequence, read_contours, write_contours, write_sequence};
use vesseltrack_core::metrics::{rasterize, dice};
use vesseltrack_core::phantom::{generate, Motion, PhantomSpec};
use vesseltrack_core::{run_sequence, SeedSource, SequenceConfig};

#[test]
fn disk_phantom_single_frame() {
    let spec = PhantomSpec {
        frames: 1,
        motion: vec![Motion::Still],
        ..PhantomSpec::default()
    };
    let (frames, truth) = generate(&spec).unwrap();
    let out = run_sequence(&frames, truth[0].ellipse.center(), &SequenceConfig::uhfus()).unwrap();
    let dims = (spec.width, spec.height);
    let d = dice(
        &rasterize(&truth[0].points, dims).unwrap(),
        &rasterize(&out[0].points, dims).unwrap(),
    )
    .unwrap();
    assert!(d >= 0.95, "dice {d}");
}

#[test]
fn seeds_stay_in_the_lumen_and_contours_in_bounds() {
    let spec = PhantomSpec::default();
    let config = SequenceConfig::uhfus();
    let (frames, truth) = generate(&spec).unwrap();
    let out = run_sequence(&frames, truth[0].ellipse.center(), &config).unwrap();
    assert_eq!(out.len(), spec.frames);
    let f = config.downsample_factor as f64;
    let (dw, dh) = ((spec.width / config.downsample_factor) as f64, (spec.height / config.downsample_factor) as f64);
    for (r, t) in out.iter().zip(&truth) {
        assert!(point_in_polygon(&t.points, r.seed), "frame {}", r.frame_index);
        for p in &r.points {
            let (x, y) = (p.x / f, p.y / f);
            assert!(x >= 0.0 && y >= 0.0 && x < dw && y < dh, "frame {} point {p:?}", r.frame_index);
        }
    }
    assert_eq!(out[0].seed_used, SeedSource::Manual);
    assert!(out[1..].iter().all(|r| r.seed_used != SeedSource::Manual));
}

#[test]
fn disk_round_trip_reproduces_results() {
    let spec = PhantomSpec {
        frames: 5,
        ..PhantomSpec::default()
    };
    let (frames, truth) = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_sequence(&frames, dir.path()).unwrap();
    let loaded = load_sequence(dir.path()).unwrap();
    assert_eq!(loaded, frames);

    let config = SequenceConfig::uhfus();
    let seed = truth[0].ellipse.center();
    let a = run_sequence(&loaded, seed, &config).unwrap();
    let b = run_sequence(&frames, seed, &config).unwrap();
    assert_eq!(a, b);

    let path = dir.path().join("contours.txt");
    write_contours(&a, Some((spec.width, spec.height)), &path).unwrap();
    let back = read_contours(&path).unwrap();
    assert_eq!(back.dims, Some((spec.width, spec.height)));
    assert_eq!(back.results, a);
}
