use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thermal_ranging::applications::{detect_falls, heatmap, occupancy, HeightSource};
use thermal_ranging::config::{Config, CONFIG_ENV};
use thermal_ranging::eval::{evaluate, rows_csv, DEFAULT_IOU_THRESHOLD};
use thermal_ranging::gbrt::GbrtParams;
use thermal_ranging::io;
use thermal_ranging::pipeline::{run_stream, truth_rois};
use thermal_ranging::ranging::train;
use thermal_ranging::simulator::{render_stream, SceneConfig};
use thermal_ranging::{Error, ErrorKind};

const FRAMES_FILE: &str = "frames.bin";
const LABELS_FILE: &str = "labels.jsonl";

#[derive(Parser)]
#[command(name = "thermal-ranging", version, about = "Detect and range people in thermal array recordings")]
struct Cli {
    /// Configuration file; falls back to the file named by THERMAL_RANGING_CONFIG.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic scene into a frame stream and labels.
    Simulate(SimulateArgs),
    /// Detect, track and range every frame of a stream.
    Run(RunArgs),
    /// Fit a ranging model on ground-truth boxes.
    Train(TrainArgs),
    /// Score detections against labels.
    Eval(EvalArgs),
    /// Report falls found in a detection stream.
    Fall(FallArgs),
    /// Count occupants and accumulate a floor heatmap.
    Occupancy(OccupancyArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the scene's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RunArgs {
    /// Stream file, or a directory holding frames.bin.
    #[arg(long)]
    frames: PathBuf,
    /// Ranging model; without one, detections carry no range.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Report raw per-frame ranges without temporal smoothing.
    #[arg(long)]
    no_kalman: bool,
    /// Feed the model a frame-center position for every ROI.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    /// Stream file, or a directory holding frames.bin.
    #[arg(long)]
    frames: PathBuf,
    /// Defaults to labels.jsonl next to the frames.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Boosting parameters, overriding the configuration's.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Train without the ROI position features.
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Per-frame counts as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD)]
    iou: f64,
}

#[derive(Args)]
struct FallArgs {
    #[arg(long)]
    detections: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Use box height at this fixed range instead of the estimated range.
    #[arg(long)]
    in_frame_reference: Option<f64>,
}

#[derive(Args)]
struct OccupancyArgs {
    #[arg(long)]
    detections: PathBuf,
    /// Heatmap cell counts as CSV.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Per-frame occupant counts as JSON lines.
    #[arg(long)]
    counts: Option<PathBuf>,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: &'a str,
    message: String,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 3,
        ErrorKind::Format => 4,
        ErrorKind::Schema => 5,
        ErrorKind::Validation => 6,
        ErrorKind::Infeasible => 7,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Io => "io",
        ErrorKind::Format => "format",
        ErrorKind::Schema => "schema",
        ErrorKind::Validation => "validation",
        ErrorKind::Infeasible => "infeasible",
    }
}

fn report_error(kind: &str, message: String) {
    let line = serde_json::to_string(&ErrorReport { error: kind, message }).unwrap_or_default();
    eprintln!("{line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report_error("usage", e.to_string().trim().to_string());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(kind_name(e.kind()), e.to_string());
            ExitCode::from(exit_code(e.kind()))
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Run(a) => run_pipeline(a, config),
        Command::Train(a) => train_model(a, config),
        Command::Eval(a) => eval(a),
        Command::Fall(a) => fall(a, config),
        Command::Occupancy(a) => occupancy_cmd(a, config),
    }
}

fn stream_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(FRAMES_FILE)
    } else {
        p.to_path_buf()
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Error> {
    let mut scene: SceneConfig = io::read_json(&a.scene)?;
    if let Some(seed) = a.seed {
        scene.seed = seed;
    }
    let (frames, labels) = render_stream(&scene)?;
    fs::create_dir_all(&a.out)?;
    io::write_stream(a.out.join(FRAMES_FILE), &scene.spec, &frames)?;
    io::write_labels(a.out.join(LABELS_FILE), &labels)
}

fn run_pipeline(a: RunArgs, config: Config) -> Result<(), Error> {
    let mut pc = config.pipeline;
    if let Some(s) = a.scale {
        pc.scale = s;
    }
    if let Some(c) = a.cutoff {
        pc.cutoff_c = c;
    }
    if a.no_kalman {
        pc.use_kalman = false;
    }
    if a.no_center {
        pc.neutral_center = true;
    }
    let model = a.model.as_ref().map(io::read_model).transpose()?;
    let (_, frames) = io::read_stream(stream_path(&a.frames))?;
    let dets = run_stream(&frames, pc, model)?;
    io::write_detections(&a.out, &dets)
}

fn train_model(a: TrainArgs, config: Config) -> Result<(), Error> {
    let stream = stream_path(&a.frames);
    let labels_path = match &a.labels {
        Some(p) => p.clone(),
        None => stream.with_file_name(LABELS_FILE),
    };
    let mut params: GbrtParams = match &a.params {
        Some(p) => io::read_json(p)?,
        None => config.gbrt,
    };
    params.validate()?;
    if let Some(seed) = a.seed {
        params.seed = seed;
    }
    let mut features = config.features;
    if a.no_center {
        features.with_center = false;
    }
    let (_, frames) = io::read_stream(&stream)?;
    let labels = io::read_labels(&labels_path)?;
    let (rois, ranges) = truth_rois(&frames, &labels, config.pipeline.scale, config.pipeline.cutoff_c)?;
    let model = train(&rois, &ranges, features, &params)?;
    io::write_model(&a.out, &model)
}

fn eval(a: EvalArgs) -> Result<(), Error> {
    let dets = io::read_detections(&a.detections)?;
    let labels = io::read_labels(&a.labels)?;
    let mut report = evaluate(&dets, &labels, a.iou);
    report.generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    io::write_json(&a.report, &report)?;
    if let Some(p) = &a.csv {
        fs::write(p, rows_csv(&report.rows))?;
    }
    Ok(())
}

fn fall(a: FallArgs, config: Config) -> Result<(), Error> {
    let dets = io::read_detections(&a.detections)?;
    let source = match a.in_frame_reference {
        Some(r) => HeightSource::InFrame { reference_range_m: r },
        None => HeightSource::Real,
    };
    let events = detect_falls(&dets, source, &config.fall)?;
    write_lines(&a.out, &events)
}

fn occupancy_cmd(a: OccupancyArgs, config: Config) -> Result<(), Error> {
    let dets = io::read_detections(&a.detections)?;
    let grid = heatmap(&dets, &config.heatmap)?;
    fs::write(&a.out, grid.to_csv())?;
    if let Some(p) = &a.pgm {
        fs::write(p, grid.to_pgm())?;
    }
    if let Some(p) = &a.counts {
        write_lines(p, &occupancy(&dets))?;
    }
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<(), Error> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Parse { line: 1, source: e })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
