use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shv_core::bench::{percentiles, time_detect_inference, time_inference, BenchReport};
use shv_core::features::{detect_frame, train_synthetic_detectors, DetectorModel, FilterBank, SyntheticTraining, WindowSpec};
use shv_core::formats::{self, ResultRecord};
use shv_core::inference::run_sequence;
use shv_core::kalman::KalmanConfig;
use shv_core::learning::{concat_sequences, learn_params};
use shv_core::metrics::{evaluate, AcceptThresholds, CSV_HEADER, FRAME_CSV_HEADER};
use shv_core::overlay::frame_svg;
use shv_core::simulation::{generate, presets, SceneScript};
use shv_core::trackers::{run_tracker, TrackerKind};
use shv_core::{Error, Grid, Image, Params, Result};

mod config;

use config::RunConfig;

#[derive(Parser)]
#[command(name = "shv", version, about = "Border and lane-marking tracking by structured Hough voting")]
struct Cli {
    /// Run configuration (`key = value` lines); flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic scene: voters, ground truth and optional frames.
    Generate(GenerateArgs),
    /// Run window detectors over PGM frames and write a voter file.
    Detect(DetectArgs),
    /// Track border and lane marking through a voter file.
    Track(TrackArgs),
    /// Learn model parameters from ground truth.
    Learn(LearnArgs),
    /// Score tracking results against ground truth.
    Eval(EvalArgs),
    /// Time per-frame tracking and detection.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ScriptArgs {
    /// Scene script file.
    #[arg(long, conflicts_with = "preset")]
    script: Option<PathBuf>,
    /// Built-in script: entrance, dropout-outlier or stress:N.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    frames: Option<usize>,
    /// Render frames and take gradient voters from them.
    #[arg(long)]
    render: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// Image width in pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Image height in pixels; also sets the default grid.
    #[arg(long)]
    height: Option<usize>,
    /// Grid as `theta_min:theta_max:theta_step:r_min:r_max:r_step`, degrees and pixels.
    #[arg(long)]
    grid: Option<String>,
}

#[derive(Args)]
struct WindowArgs {
    #[arg(long)]
    window_width: Option<usize>,
    #[arg(long)]
    window_height: Option<usize>,
    #[arg(long)]
    stride_x: Option<usize>,
    #[arg(long)]
    stride_y: Option<usize>,
    /// Detection band as `start:end` image rows.
    #[arg(long)]
    band: Option<String>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    script: ScriptArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also train border and lane detectors on the rendered frames.
    #[arg(long)]
    train_detectors: bool,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct DetectArgs {
    /// Directory of PGM frames, processed in file-name order.
    #[arg(long)]
    images: PathBuf,
    #[arg(long)]
    border_model: PathBuf,
    #[arg(long)]
    lane_model: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override both detectors' decision thresholds.
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    voters: PathBuf,
    #[arg(long)]
    tracker: Option<TrackerKind>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Results file (JSON lines); standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write one SVG per frame into this directory.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Ground truth drawn into the overlays.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct LearnArgs {
    /// Ground-truth files; each is an independent sequence.
    #[arg(long, required = true, num_args = 1..)]
    truth: Vec<PathBuf>,
    /// Structured results whose perturbation records calibrate the mode penalty.
    #[arg(long, num_args = 1..)]
    results: Vec<PathBuf>,
    /// Starting parameters (defaults otherwise).
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Shoulder polygons: `frame x1 y1 x2 y2 ...`, image pixels.
    #[arg(long)]
    polygons: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Per-frame CSV breakdown.
    #[arg(long)]
    per_frame: Option<PathBuf>,
    /// Report file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    bd_pen: Option<f64>,
    #[arg(long)]
    ln_pen: Option<f64>,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    script: ScriptArgs,
    #[arg(long)]
    tracker: Option<TrackerKind>,
    #[arg(long)]
    params: Option<PathBuf>,
    /// Detectors for the detect+inference path; without them, detectors are
    /// trained on the benchmark frames before timing.
    #[arg(long, requires = "lane_model")]
    border_model: Option<PathBuf>,
    #[arg(long, requires = "border_model")]
    lane_model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: BenchFormat,
    #[command(flatten)]
    window: WindowArgs,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BenchFormat {
    Text,
    Json,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn io_missing(path: &Path, msg: &str) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, msg.to_string()))
}

fn load_script(cfg: &RunConfig, a: &ScriptArgs) -> Result<(SceneScript, u64)> {
    let mut s = match (&a.script, a.preset.as_deref()) {
        (Some(p), _) => SceneScript::load(p)?,
        (None, None) => SceneScript::default(),
        (None, Some("entrance")) => presets::entrance(120, 50, 30.0),
        (None, Some("dropout-outlier")) => presets::dropout_outlier(),
        (None, Some(p)) => match p.strip_prefix("stress:").map(str::parse::<u64>) {
            Some(Ok(i)) => presets::stress(i),
            _ => return Err(config_err(format!("unknown preset {p:?} (expected entrance, dropout-outlier or stress:N)"))),
        },
    };
    if let Some(f) = a.frames {
        s.frames = f;
    }
    s.render |= a.render;
    s.validate()?;
    Ok((s, cfg.or(a.seed, "seed", 0)?))
}

fn dims(cfg: &RunConfig, g: &GridArgs) -> Result<(usize, usize)> {
    Ok((cfg.or(g.width, "width", 160)?, cfg.or(g.height, "height", 120)?))
}

fn grid(cfg: &RunConfig, g: &GridArgs) -> Result<Grid> {
    let (_, h) = dims(cfg, g)?;
    let base = Grid::for_image_height(h);
    let mut v = [
        base.theta_min().to_degrees(),
        base.theta_max().to_degrees(),
        base.theta_step().to_degrees(),
        base.r_min(),
        base.r_max(),
        base.r_step(),
    ];
    if let Some(spec) = &g.grid {
        let parts: Vec<f64> = spec
            .split(':')
            .map(|t| t.trim().parse::<f64>().map_err(|e| config_err(format!("--grid: bad number {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        if parts.len() != 6 {
            return Err(config_err("--grid expects six `:`-separated numbers"));
        }
        v.copy_from_slice(&parts);
    } else {
        let keys = ["grid.theta_min", "grid.theta_max", "grid.theta_step", "grid.r_min", "grid.r_max", "grid.r_step"];
        let mut custom = false;
        for (slot, key) in v.iter_mut().zip(keys) {
            if let Some(x) = cfg.get::<f64>(None, key)? {
                *slot = x;
                custom = true;
            }
        }
        if !custom {
            return Ok(base);
        }
    }
    Grid::from_degrees(v[0], v[1], v[2], v[3], v[4], v[5])
}

fn params(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<Params> {
    match cfg.path(flag, "params")? {
        Some(p) => Params::load(&p),
        None => Ok(Params::default()),
    }
}

fn kalman(cfg: &RunConfig) -> Result<KalmanConfig<f64>> {
    let d = KalmanConfig::default();
    Ok(KalmanConfig {
        q_theta: cfg.or(None, "kalman.q_theta", d.q_theta)?,
        q_r: cfg.or(None, "kalman.q_r", d.q_r)?,
        m_theta: cfg.or(None, "kalman.m_theta", d.m_theta)?,
        m_r: cfg.or(None, "kalman.m_r", d.m_r)?,
        p0_theta_dot: cfg.or(None, "kalman.p0_theta_dot", d.p0_theta_dot)?,
        p0_r_dot: cfg.or(None, "kalman.p0_r_dot", d.p0_r_dot)?,
    })
}

fn window(cfg: &RunConfig, w: &WindowArgs) -> Result<WindowSpec> {
    let d = WindowSpec::default();
    let band = match &w.band {
        Some(b) => {
            let (s, e) = b.split_once(':').ok_or_else(|| config_err("--band expects `start:end`"))?;
            let p = |t: &str| t.trim().parse::<usize>().map_err(|e| config_err(format!("--band: {e}")));
            Some((p(s)?, p(e)?))
        }
        None => match (cfg.get::<usize>(None, "window.band_start")?, cfg.get::<usize>(None, "window.band_end")?) {
            (Some(s), Some(e)) => Some((s, e)),
            (None, None) => None,
            _ => return Err(config_err("window.band_start and window.band_end go together")),
        },
    };
    Ok(WindowSpec {
        width: cfg.or(w.window_width, "window.width", d.width)?,
        height: cfg.or(w.window_height, "window.height", d.height)?,
        stride_x: cfg.or(w.stride_x, "window.stride_x", d.stride_x)?,
        stride_y: cfg.or(w.stride_y, "window.stride_y", d.stride_y)?,
        band,
    })
}

fn tracker(cfg: &RunConfig, flag: Option<TrackerKind>) -> Result<TrackerKind> {
    cfg.or(flag, "tracker", TrackerKind::Structured)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => formats::write_text(p, text),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn cmd_generate(cfg: &RunConfig, a: GenerateArgs) -> Result<()> {
    let (script, seed) = load_script(cfg, &a.script)?;
    if a.train_detectors && !script.render {
        return Err(config_err("--train-detectors needs rendered frames (--render or `render = true` in the script)"));
    }
    let seq = generate::<f64>(&script, seed)?;
    mkdir(&a.out)?;
    formats::write_text(&a.out.join("voters.txt"), &formats::write_voters(&seq.observations))?;
    formats::write_text(&a.out.join("truth.txt"), &formats::write_ground_truth(&seq.truth))?;
    if let Some(images) = &seq.images {
        let dir = a.out.join("frames");
        mkdir(&dir)?;
        for (i, img) in images.iter().enumerate() {
            img.write_pgm(&dir.join(format!("frame_{:05}.pgm", i + 1)))?;
        }
    }
    if a.train_detectors {
        let spec = window(cfg, &a.window)?;
        let [bd, ln] = train_synthetic_detectors(&seq, &spec, &FilterBank::default(), &SyntheticTraining::default())?;
        bd.save(&a.out.join("detector_bd.txt"))?;
        ln.save(&a.out.join("detector_ln.txt"))?;
    }
    eprintln!("wrote {} frames to {}", seq.observations.len(), a.out.display());
    Ok(())
}

fn cmd_detect(cfg: &RunConfig, a: DetectArgs) -> Result<()> {
    let files = formats::list_pgm(&a.images)?;
    if files.is_empty() {
        return Err(io_missing(&a.images, "no .pgm frames"));
    }
    let mut bd = DetectorModel::load(&a.border_model)?;
    let mut ln = DetectorModel::load(&a.lane_model)?;
    let thr = cfg.get(a.threshold, "detector.threshold")?;
    if let Some(t) = thr {
        bd.threshold = t;
        ln.threshold = t;
    }
    let spec = window(cfg, &a.window)?;
    let bank = FilterBank::default();
    let obs = files
        .iter()
        .enumerate()
        .map(|(i, f)| detect_frame(i + 1, &Image::read_pgm(f)?, &bank, &spec, &bd, &ln).map_err(|e| e.at_frame(i + 1)))
        .collect::<Result<Vec<_>>>()?;
    formats::write_text(&a.out, &formats::write_voters(&obs))
}

fn cmd_track(cfg: &RunConfig, a: TrackArgs) -> Result<()> {
    let obs = formats::load_voters::<f64>(&a.voters)?;
    let p = params(cfg, a.params)?;
    let g = grid(cfg, &a.grid)?;
    let kind = tracker(cfg, a.tracker)?;
    let (records, pairs) = if kind == TrackerKind::Structured {
        let res = run_sequence(&obs, &g, &p)?;
        let pairs = shv_core::baselines::structured_pairs(&res);
        (res.iter().map(ResultRecord::from_frame).collect::<Vec<_>>(), pairs)
    } else {
        let pairs = run_tracker(kind, &obs, &g, &p, &kalman(cfg)?)?;
        (pairs.iter().map(ResultRecord::from_pair).collect(), pairs)
    };
    emit(a.out.as_deref(), &formats::write_results(&records))?;
    if let Some(dir) = &a.overlay {
        let (w, h) = dims(cfg, &a.grid)?;
        let truth = a.truth.as_deref().map(formats::load_ground_truth::<f64>).transpose()?;
        mkdir(dir)?;
        for (i, pair) in pairs.iter().enumerate() {
            let t = truth.as_ref().and_then(|t| t.get(i));
            formats::write_text(&dir.join(format!("frame_{:05}.svg", pair.frame)), &frame_svg(pair, t, w, h, None))?;
        }
    }
    Ok(())
}

fn cmd_learn(cfg: &RunConfig, a: LearnArgs) -> Result<()> {
    let seqs = a.truth.iter().map(|p| formats::load_ground_truth::<f64>(p)).collect::<Result<Vec<_>>>()?;
    let gt = concat_sequences(seqs);
    let mut records = Vec::new();
    for r in &a.results {
        records.extend(formats::load_results(r)?.into_iter().filter_map(|r| r.perturbation));
    }
    let base = params(cfg, a.params)?;
    let (p, report) = learn_params(&gt, &records, &grid(cfg, &a.grid)?, &base)?;
    p.save(&a.out)?;
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    if !report.violating_frames.is_empty() {
        eprintln!("note: structure constraint fails on {} annotated frames", report.violating_frames.len());
    }
    emit(None, &p.to_text())
}

fn cmd_eval(cfg: &RunConfig, a: EvalArgs) -> Result<()> {
    let pred: Vec<_> = formats::load_results(&a.results)?.iter().map(ResultRecord::pair).collect();
    let mut truth = formats::load_ground_truth::<f64>(&a.truth)?;
    if let Some(p) = &a.polygons {
        let polys = formats::read_polygons(&formats::read_text(p)?, &p.display().to_string())?;
        formats::attach_polygons(&mut truth, polys);
    }
    let d = AcceptThresholds::default();
    let thr = AcceptThresholds { bd_pen: cfg.or(a.bd_pen, "accept.bd_pen", d.bd_pen)?, ln_pen: cfg.or(a.ln_pen, "accept.ln_pen", d.ln_pen)? };
    let (w, h) = dims(cfg, &a.grid)?;
    let (report, frames) = evaluate(&pred, &truth, w, h, &thr)?;
    let text = match a.format {
        Format::Csv => format!("{CSV_HEADER}\n{}\n", report.csv_row()),
        Format::Json => format!("{}\n", serde_json::to_string(&report).expect("report serializes")),
    };
    emit(a.out.as_deref(), &text)?;
    if let Some(p) = &a.per_frame {
        let mut s = format!("{FRAME_CSV_HEADER}\n");
        for f in &frames {
            s.push_str(&f.csv_row());
            s.push('\n');
        }
        formats::write_text(p, &s)?;
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, a: BenchArgs) -> Result<()> {
    let (script, seed) = load_script(cfg, &a.script)?;
    let seq = generate::<f64>(&script, seed)?;
    let g = Grid::for_image_height(script.height);
    let p = params(cfg, a.params)?;
    let k = kalman(cfg)?;
    let kind = tracker(cfg, a.tracker)?;
    let inference = time_inference(kind, &seq.observations, &g, &p, &k)?;
    let detect = match &seq.images {
        None => None,
        Some(images) => {
            let spec = window(cfg, &a.window)?;
            let bank = FilterBank::default();
            let models = match (&a.border_model, &a.lane_model) {
                (Some(b), Some(l)) => [DetectorModel::load(b)?, DetectorModel::load(l)?],
                _ => train_synthetic_detectors(&seq, &spec, &bank, &SyntheticTraining::default())?,
            };
            Some(time_detect_inference(kind, images, &bank, &spec, &models, &g, &p, &k)?)
        }
    };
    let report = BenchReport {
        tracker: kind,
        frames: inference.len(),
        grid_cells: g.len(),
        inference_ms: percentiles(&inference).ok_or_else(|| config_err("benchmark needs at least one frame"))?,
        detect_inference_ms: detect.as_deref().and_then(percentiles),
    };
    let text = match a.format {
        BenchFormat::Json => format!("{}\n", serde_json::to_string_pretty(&report).expect("report serializes")),
        BenchFormat::Text => {
            let row = |name: &str, q: &shv_core::bench::Percentiles| {
                format!("{name:<18} p50 {:8.3} ms  p90 {:8.3} ms  p99 {:8.3} ms  max {:8.3} ms\n", q.p50, q.p90, q.p99, q.max)
            };
            let mut s = format!("{} on {} frames, {} grid cells\n", report.tracker, report.frames, report.grid_cells);
            s.push_str(&row("inference", &report.inference_ms));
            if let Some(d) = &report.detect_inference_ms {
                s.push_str(&row("detect+inference", d));
            }
            s
        }
    };
    emit(None, &text)
}

/// 2 bad configuration or input, 3 infeasible inference, 4 I/O.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::AtFrame { source, .. } => exit_code(source),
        Error::ConstraintInfeasible { .. } | Error::InitInfeasible | Error::EmptyWindow => 3,
        Error::Io { .. } => 4,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Generate(a) => cmd_generate(&cfg, a),
        Cmd::Detect(a) => cmd_detect(&cfg, a),
        Cmd::Track(a) => cmd_track(&cfg, a),
        Cmd::Learn(a) => cmd_learn(&cfg, a),
        Cmd::Eval(a) => cmd_eval(&cfg, a),
        Cmd::Bench(a) => cmd_bench(&cfg, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
