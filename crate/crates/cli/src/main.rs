use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use tokio::net::TcpListener;

use vesseltrack_client::{Client, ClientError};
use vesseltrack_core::api::ScoreRequest;
use vesseltrack_core::io::{
    load_sequence, read_contours, render_overlay, write_contours, write_overlay, write_pgm,
};
use vesseltrack_core::metrics::Summary;
use vesseltrack_core::phantom::{PhantomSpec, Speckle};
use vesseltrack_core::{ContourResult, GrayImage, Point, Preset, SequenceConfig};
use vesseltrack_server::{serve, ServerOptions};

const EXIT_HELP: &str = "\
Exit codes:
  0  success
  1  processing failed (tracking lost, segmentation or scoring error)
  2  usage error (bad flags, missing seed, invalid configuration)
  3  input/output error (unreadable frames, mixed dimensions, bad files)
  4  server unreachable";

/// Vessel segmentation and tracking for ultrasound B-scan sequences.
///
/// Every command runs against the vesseltrack service. Without --server, a
/// private server is started in-process on a loopback port.
#[derive(Parser, Debug)]
#[command(name = "vtrack", version, after_help = EXIT_HELP)]
struct Cli {
    /// Base URL of a running server, e.g. http://127.0.0.1:8080.
    #[arg(long, global = true)]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Track a vessel through a directory of frames.
    Run(RunArgs),
    /// Compare two contour files.
    Score(ScoreArgs),
    /// Generate a synthetic sequence with ground truth.
    Phantom(PhantomArgs),
    /// Time the per-frame pipeline on a phantom.
    Bench(BenchArgs),
    /// Run the HTTP service in the foreground.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Parameter preset.
    #[arg(long, default_value = "uhfus")]
    preset: Preset,
    /// Key/value configuration file, applied after the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Single override KEY=VALUE, applied last. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> anyhow::Result<SequenceConfig> {
        let mut config = SequenceConfig::preset(self.preset);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            config.apply_text(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got '{kv}'")))?;
            config.set(k.trim(), v.trim()).map_err(|e| usage(e.to_string()))?;
        }
        config.validate().map_err(|e| usage(e.to_string()))?;
        Ok(config)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Directory of 8-bit grayscale PGM/PNG frames, processed in name order.
    input: PathBuf,
    /// Seed point inside the lumen of the first frame, full-resolution pixels.
    #[arg(long, value_parser = parse_seed, value_name = "X,Y")]
    seed: Point,
    /// Output directory.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
    /// Write a PNG overlay per frame.
    #[arg(long)]
    overlays: bool,
    /// Ground-truth contour file to score against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    /// Reference contour file.
    #[arg(long)]
    truth: PathBuf,
    /// Contour file to evaluate.
    #[arg(long)]
    estimate: PathBuf,
    /// Pixel pitch in mm; defaults to the preset's.
    #[arg(long)]
    pitch: Option<f64>,
    #[arg(long, default_value = "uhfus")]
    preset: Preset,
    /// Image size WxH, when neither file records it.
    #[arg(long, value_parser = parse_dims, value_name = "WxH")]
    dims: Option<(usize, usize)>,
    /// Write the per-frame table here.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PhantomArgs {
    /// Output directory for frames and truth.txt.
    #[arg(long)]
    output: PathBuf,
    /// Scene preset: uhfus (832x512, 100 frames) or hfus (280x534, 250 frames).
    #[arg(long, default_value = "uhfus")]
    preset: Preset,
    #[arg(long)]
    frames: Option<usize>,
    /// Scripted jump FRAME:DX (pixels along x).
    #[arg(long, value_parser = parse_jump, value_name = "FRAME:DX")]
    jump: Option<(usize, f64)>,
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Disable speckle.
    #[arg(long)]
    no_speckle: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value = "uhfus")]
    preset: Preset,
    #[arg(long)]
    frames: Option<usize>,
    /// Thread counts to time, comma separated; 0 means all cores.
    #[arg(long, value_delimiter = ',', default_value = "1,0")]
    threads: Vec<usize>,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: String,
    /// Default worker threads per sequence (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_seed(s: &str) -> Result<Point, String> {
    let (x, y) = s.split_once(',').ok_or("expected X,Y")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x '{x}'"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y '{y}'"))?;
    Ok(Point::new(x, y))
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s.split_once('x').ok_or("expected WxH")?;
    Ok((
        w.parse().map_err(|_| format!("bad width '{w}'"))?,
        h.parse().map_err(|_| format!("bad height '{h}'"))?,
    ))
}

fn parse_jump(s: &str) -> Result<(usize, f64), String> {
    let (f, d) = s.split_once(':').ok_or("expected FRAME:DX")?;
    Ok((
        f.parse().map_err(|_| format!("bad frame '{f}'"))?,
        d.parse().map_err(|_| format!("bad offset '{d}'"))?,
    ))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use vesseltrack_core::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(c) = cause.downcast_ref::<ClientError>() {
            return match c {
                ClientError::Transport(_) => 4,
                ClientError::Api { code, .. } => match code.as_str() {
                    "invalid_parameter" | "bad_kernel" | "seed_outside_image" | "bad_request" => 2,
                    "dimension_mismatch" | "mixed_dimensions" | "image_too_small" => 3,
                    _ => 1,
                },
            };
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::InvalidParameter(_) | E::BadKernel(_) => 2,
                E::Io(_)
                | E::MixedDimensions { .. }
                | E::UnsupportedPixelFormat { .. }
                | E::EmptyDirectory(_)
                | E::Parse(_) => 3,
                _ => 1,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

async fn dispatch(cli: Cli) -> anyhow::Result<()> {
    if let Command::Serve(args) = &cli.command {
        return serve_foreground(args).await;
    }
    let client = match &cli.server {
        Some(url) => Client::new(url.clone()),
        None => spawn_local_server().await?,
    };
    match cli.command {
        Command::Run(a) => run(&client, a).await,
        Command::Score(a) => score(&client, a).await,
        Command::Phantom(a) => phantom(&client, a).await,
        Command::Bench(a) => bench(&client, a).await,
        Command::Serve(_) => unreachable!(),
    }
}

async fn spawn_local_server() -> anyhow::Result<Client> {
    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let addr = listener.local_addr()?;
    tokio::spawn(serve(listener, ServerOptions::default(), std::future::pending()));
    Ok(Client::new(format!("http://{addr}")))
}

async fn serve_foreground(args: &ServeArgs) -> anyhow::Result<()> {
    let listener = TcpListener::bind(&args.bind)
        .await
        .with_context(|| format!("cannot bind {}", args.bind))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    let options = ServerOptions {
        default_threads: args.threads,
    };
    serve(listener, options, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}

fn format_score_table(frames: &[vesseltrack_core::metrics::FrameScore]) -> String {
    let mut s = String::from("# frame dice hausdorff_mm mad_mm dfpd dfnd\n");
    for f in frames {
        let _ = writeln!(
            s,
            "{} {:.6} {:.6} {:.6} {:.6} {:.6}",
            f.frame_index, f.dice, f.hausdorff_mm, f.mad_mm, f.dfpd, f.dfnd
        );
    }
    s
}

async fn score_contours(
    client: &Client,
    truth: &[ContourResult],
    estimate: &[ContourResult],
    dims: (usize, usize),
    pitch: f64,
) -> anyhow::Result<vesseltrack_core::api::ScoreResponse> {
    let req = ScoreRequest {
        truth: truth.iter().map(|r| r.points.clone()).collect(),
        estimate: estimate.iter().map(|r| r.points.clone()).collect(),
        width: dims.0,
        height: dims.1,
        pixel_pitch_mm: pitch,
    };
    Ok(client.score(&req).await?)
}

fn print_summary(s: &vesseltrack_core::metrics::ScoreSummary) {
    println!(
        "Dice {}  Hausdorff {} mm  MAD {} mm  DFPD {}  DFND {}  ({} frames)",
        s.dice, s.hausdorff_mm, s.mad_mm, s.dfpd, s.dfnd, s.dice.n
    );
}

async fn run(client: &Client, args: RunArgs) -> anyhow::Result<()> {
    let config = args.config.build()?;
    let truth = match &args.truth {
        Some(p) => Some(read_contours(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let frames = load_sequence(&args.input)
        .with_context(|| format!("loading frames from {}", args.input.display()))?;
    let dims = frames[0].dims();
    if let Some(t) = &truth {
        if t.results.len() != frames.len() {
            return Err(usage(format!(
                "truth has {} frames but input has {}",
                t.results.len(),
                frames.len()
            )));
        }
    }
    fs::create_dir_all(&args.output)?;

    let seq = client.create_sequence(&config, args.seed, args.threads).await?;
    let mut results = Vec::with_capacity(frames.len());
    let mut compute_ms = 0.0;
    for frame in &frames {
        let out = match seq.push(frame).await {
            Ok(out) => out,
            Err(e) => {
                let _ = seq.clone().close().await;
                return Err(e.into());
            }
        };
        compute_ms += out.elapsed_ms;
        results.push(out.result);
    }
    seq.close().await?;

    write_contours(&results, Some(dims), &args.output.join("contours.txt"))?;
    fs::write(args.output.join("config.txt"), config.to_text())?;
    if args.overlays {
        write_overlays(&args.output.join("overlays"), &frames, &results, truth.as_ref().map(|t| &t.results[..]))?;
    }
    println!(
        "tracked {} frames, {:.1} ms/frame compute, results in {}",
        results.len(),
        compute_ms / results.len() as f64,
        args.output.display()
    );
    if let Some(t) = truth {
        let scored = score_contours(client, &t.results, &results, dims, config.pixel_pitch_mm).await?;
        fs::write(args.output.join("metrics.txt"), format_score_table(&scored.frames))?;
        print_summary(&scored.summary);
    }
    Ok(())
}

fn write_overlays(
    dir: &Path,
    frames: &[GrayImage],
    results: &[ContourResult],
    truth: Option<&[ContourResult]>,
) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, (f, r)) in frames.iter().zip(results).enumerate() {
        let img = render_overlay(f, r, truth.map(|t| &t[i]));
        write_overlay(&img, &dir.join(format!("overlay_{i:04}.png")))?;
    }
    Ok(())
}

async fn score(client: &Client, args: ScoreArgs) -> anyhow::Result<()> {
    let truth = read_contours(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let est = read_contours(&args.estimate)
        .with_context(|| format!("reading {}", args.estimate.display()))?;
    let dims = args
        .dims
        .or(truth.dims)
        .or(est.dims)
        .ok_or_else(|| usage("image size unknown: neither file has a dims header; pass --dims WxH"))?;
    let pitch = args
        .pitch
        .unwrap_or_else(|| SequenceConfig::preset(args.preset).pixel_pitch_mm);
    let scored = score_contours(client, &truth.results, &est.results, dims, pitch).await?;
    let table = format_score_table(&scored.frames);
    match &args.output {
        Some(p) => fs::write(p, &table)?,
        None => print!("{table}"),
    }
    print_summary(&scored.summary);
    Ok(())
}

fn phantom_spec(preset: Preset, frames: Option<usize>, jump: Option<(usize, f64)>) -> PhantomSpec {
    let mut spec = match (preset, jump) {
        (Preset::Hfus, _) => PhantomSpec::hfus(),
        (_, Some((frame, dx))) => PhantomSpec::with_jump(frame, dx),
        _ => PhantomSpec::default(),
    };
    if let (Preset::Hfus, Some((frame, dx))) = (preset, jump) {
        spec.vessel.cx -= dx / 2.0;
        spec.motion.push(vesseltrack_core::phantom::Motion::Jump { frame, dx, dy: 0.0 });
    }
    if let Some(n) = frames {
        spec.frames = n;
    }
    spec
}

async fn phantom(client: &Client, args: PhantomArgs) -> anyhow::Result<()> {
    let mut spec = phantom_spec(args.preset, args.frames, args.jump);
    if let Some(s) = args.rng_seed {
        spec.rng_seed = s;
    }
    if args.no_speckle {
        spec.speckle = Speckle::None;
    }
    let resp = client.phantom(&spec).await?;
    fs::create_dir_all(&args.output)?;
    for (i, f) in resp.frames.iter().enumerate() {
        write_pgm(&f.to_image()?, &args.output.join(format!("frame_{i:04}.pgm")))?;
    }
    write_contours(&resp.truth, Some((spec.width, spec.height)), &args.output.join("truth.txt"))?;
    let seed = resp
        .truth
        .first()
        .map(|t| t.ellipse.center())
        .ok_or_else(|| anyhow!("phantom has no frames"))?;
    println!(
        "wrote {} frames ({}x{}) and truth.txt to {}",
        resp.frames.len(),
        spec.width,
        spec.height,
        args.output.display()
    );
    println!("seed {},{}", seed.x, seed.y);
    Ok(())
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

async fn bench(client: &Client, args: BenchArgs) -> anyhow::Result<()> {
    let config = SequenceConfig::preset(args.preset);
    let spec = phantom_spec(args.preset, args.frames, None);
    let resp = client.phantom(&spec).await?;
    let frames: Vec<GrayImage> = resp.frames.iter().map(|f| f.to_image()).collect::<Result<_, _>>()?;
    let seed = resp.truth[0].ellipse.center();
    println!(
        "bench: {} frames {}x{}, preset {}, compute time per frame (I/O excluded)",
        frames.len(),
        spec.width,
        spec.height,
        args.preset.as_str()
    );
    for &threads in &args.threads {
        let seq = client.create_sequence(&config, seed, Some(threads)).await?;
        let wall = Instant::now();
        let mut ms = Vec::with_capacity(frames.len());
        for f in &frames {
            ms.push(seq.push(f).await?.elapsed_ms);
        }
        let wall = wall.elapsed().as_secs_f64();
        let used = seq.info().threads;
        seq.close().await?;
        let mean = Summary::of(&ms).mean;
        ms.sort_by(f64::total_cmp);
        println!(
            "threads {used:>3}: mean {mean:.2} ms/frame  p95 {:.2} ms  {:.1} FPS  (wall {wall:.2} s incl. transfer)",
            percentile(&ms, 0.95),
            1e3 / mean
        );
    }
    Ok(())
}
