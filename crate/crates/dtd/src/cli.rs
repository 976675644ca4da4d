//! The `dtd` command line.
//!
//! Exit status: 0 on success, 2 on usage errors (bad or missing flags), 1 on
//! runtime failures.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dtd_core::net::{CascadeSpec, CascadeTrainConfig};
use dtd_core::pipeline::{Baseline, Clock, FrameResult, FrameStatus, FrozenClock, Models, Pipeline, TimingSummary};
use dtd_core::synth::{face_cascade, SyntheticSceneSpec};
use dtd_core::GrayImage;
use rayon::prelude::*;

use crate::annotate::annotate;
use crate::clock::MonotonicClock;
use crate::error::DtdError;
use crate::eval::evaluate;
use crate::imageio::{load_all_frames, load_frames, write_pgm};
use crate::models::{load_cascade_model, load_net_config, load_weights, save_weights, write_json};
use crate::records::{read_records, write_ground_truth, write_records, write_results, FrameRecord};
use crate::train::train_cascade_parallel;

#[derive(Debug, Parser)]
#[command(name = "dtd", version, about = "Facial landmark tracking in video by detection, tracking and re-detection")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Track landmarks through one or more frame directories.
    Run(RunArgs),
    /// Full-frame detection and landmarks on every frame, no tracking.
    Baseline(RunArgs),
    /// Run both methods on one sequence and report per-stage timings.
    Compare(CompareArgs),
    /// Write a synthetic face video with ground truth.
    Synth(SynthArgs),
    /// Landmark error of a results file against ground truth.
    Eval(EvalArgs),
    /// Train the landmark networks on synthetic faces.
    Train(TrainArgs),
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Landmark network weights.
    #[arg(long, value_name = "FILE")]
    weights: PathBuf,
    /// Landmark network layout (JSON). Defaults to the toy layout.
    #[arg(long, value_name = "FILE")]
    net_config: Option<PathBuf>,
    /// Face detector cascade (JSON). Defaults to the built-in synthetic-face cascade.
    #[arg(long, value_name = "FILE")]
    cascade: Option<PathBuf>,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Debug, Args)]
struct TuningArgs {
    /// Smallest detection window side, pixels.
    #[arg(long, value_parser = positive_usize)]
    min_face: Option<usize>,
    /// Window growth between detector scales.
    #[arg(long, value_parser = greater_than_one)]
    scale_factor: Option<f64>,
    /// Window step as a fraction of the window side.
    #[arg(long, value_parser = unit_fraction)]
    step_fraction: Option<f64>,
    /// Raw windows needed to keep a grouped detection.
    #[arg(long)]
    min_neighbors: Option<usize>,
    /// Overlap for merging raw windows into one detection.
    #[arg(long, value_parser = unit_fraction)]
    group_iou: Option<f64>,
    /// Half-width of the optical-flow window.
    #[arg(long, value_parser = positive_usize)]
    window_radius: Option<usize>,
    /// Optical-flow pyramid levels.
    #[arg(long, value_parser = positive_usize)]
    pyramid_levels: Option<usize>,
    /// Optical-flow iterations per level.
    #[arg(long, value_parser = positive_usize)]
    max_iterations: Option<usize>,
    /// Optical-flow convergence threshold, pixels.
    #[arg(long, value_parser = positive_f64)]
    lk_epsilon: Option<f64>,
    /// Minimum structure-tensor eigenvalue for a trackable point.
    #[arg(long, value_parser = non_negative_f64)]
    min_eigen: Option<f64>,
    /// Fewest surviving point pairs for a box estimate.
    #[arg(long, value_parser = positive_usize)]
    min_support: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Frame directory. Repeat to process several videos.
    #[arg(long, value_name = "DIR", required = true)]
    frames: Vec<PathBuf>,
    #[command(flatten)]
    models: ModelArgs,
    /// Results file; a directory when several videos are given. Standard
    /// output if omitted with a single video.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Record all stage timings as zero, making output reproducible.
    #[arg(long)]
    no_timings: bool,
    /// Write every frame with its box and landmarks drawn, as PGM.
    #[arg(long, value_name = "DIR")]
    dump_annotated: Option<PathBuf>,
    /// Process several videos concurrently.
    #[arg(long)]
    parallel_videos: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_name = "DIR")]
    frames: PathBuf,
    #[command(flatten)]
    models: ModelArgs,
    /// Directory for `dtd.jsonl` and `baseline.jsonl`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for frames, ground truth and the scene description.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    num_frames: usize,
    #[arg(long, default_value_t = 1280, value_parser = positive_usize)]
    width: usize,
    #[arg(long, default_value_t = 720, value_parser = positive_usize)]
    height: usize,
    /// Face box side, pixels.
    #[arg(long, default_value_t = 140.0, value_parser = positive_f64)]
    face_size: f64,
    /// Largest face displacement between frames, pixels.
    #[arg(long, default_value_t = 6.0, value_parser = non_negative_f64)]
    max_step: f64,
    /// Cover the face for LEN frames from START, written START:LEN.
    #[arg(long, value_name = "START:LEN", value_parser = parse_span)]
    occlude: Option<(usize, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Results file written by `run` or `baseline`.
    #[arg(long, value_name = "FILE")]
    results: PathBuf,
    /// Ground-truth file written by `synth`.
    #[arg(long, value_name = "FILE")]
    truth: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Where to write the trained weights.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Network layout to train (JSON). Defaults to the toy layout.
    #[arg(long, value_name = "FILE")]
    net_config: Option<PathBuf>,
    /// Also write the layout used, for later `--net-config`.
    #[arg(long, value_name = "FILE")]
    write_net_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rendered base faces before augmentation.
    #[arg(long, value_parser = positive_usize)]
    base_faces: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    level1_epochs: Option<usize>,
    #[arg(long, value_parser = positive_usize)]
    local_epochs: Option<usize>,
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(format!("expected a positive integer, got {s:?}")),
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| format!("expected a number, got {s:?}"))
}

fn positive_f64(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| if v > 0.0 { Ok(v) } else { Err(format!("must be positive, got {v}")) })
}

fn non_negative_f64(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| if v >= 0.0 { Ok(v) } else { Err(format!("must not be negative, got {v}")) })
}

fn greater_than_one(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| if v > 1.0 { Ok(v) } else { Err(format!("must exceed 1, got {v}")) })
}

fn unit_fraction(s: &str) -> Result<f64, String> {
    parse_f64(s).and_then(|v| if v > 0.0 && v <= 1.0 { Ok(v) } else { Err(format!("must be in (0, 1], got {v}")) })
}

fn parse_span(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:LEN, got {s:?}"))?;
    let start = a.parse::<usize>().map_err(|_| format!("bad START in {s:?}"))?;
    let len = positive_usize(b)?;
    Ok((start, len))
}

enum CliError {
    Usage(String),
    Runtime(DtdError),
}

impl From<DtdError> for CliError {
    fn from(e: DtdError) -> Self {
        CliError::Runtime(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Runtime(DtdError::Io { path: PathBuf::from("<stdout>"), source: e })
    }
}

/// Parse `args` (program name first), run the command, return the exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Run(a) => cmd_run(a, Method::Track),
        Command::Baseline(a) => cmd_run(a, Method::Baseline),
        Command::Compare(a) => cmd_compare(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Train(a) => cmd_train(a),
    }
}

fn load_models(a: &ModelArgs) -> Result<Models, CliError> {
    let spec = match &a.net_config {
        Some(p) => load_net_config(p)?,
        None => CascadeSpec::toy(),
    };
    let landmarks = load_weights(&a.weights, &spec)?;
    let detector = match &a.cascade {
        Some(p) => load_cascade_model(p)?,
        None => face_cascade(),
    };
    let mut m = Models::new(detector, landmarks);
    let t = &a.tuning;
    let d = &mut m.detect_params;
    d.min_size = t.min_face.unwrap_or(d.min_size);
    d.scale_factor = t.scale_factor.unwrap_or(d.scale_factor);
    d.step_fraction = t.step_fraction.unwrap_or(d.step_fraction);
    d.group_min_neighbors = t.min_neighbors.unwrap_or(d.group_min_neighbors);
    d.group_iou = t.group_iou.unwrap_or(d.group_iou);
    let f = &mut m.flow;
    f.window_radius = t.window_radius.unwrap_or(f.window_radius);
    f.pyramid_levels = t.pyramid_levels.unwrap_or(f.pyramid_levels);
    f.max_iterations = t.max_iterations.unwrap_or(f.max_iterations);
    f.epsilon = t.lk_epsilon.unwrap_or(f.epsilon);
    f.min_eigen_threshold = t.min_eigen.unwrap_or(f.min_eigen_threshold);
    m.min_support = t.min_support.unwrap_or(m.min_support);
    Ok(m)
}

#[derive(Clone, Copy, PartialEq)]
enum Method {
    Track,
    Baseline,
}

/// Either stepper behind one interface.
enum Stepper<'m, C: Clock> {
    Track(Box<Pipeline<'m, C>>),
    Baseline(Baseline<'m, C>),
}

impl<'m, C: Clock> Stepper<'m, C> {
    fn new(method: Method, models: &'m Models, clock: C) -> Self {
        match method {
            Method::Track => Stepper::Track(Box::new(Pipeline::new(models, clock))),
            Method::Baseline => Stepper::Baseline(Baseline::new(models, clock)),
        }
    }

    fn step(&mut self, img: &GrayImage) -> Result<FrameResult, DtdError> {
        Ok(match self {
            Stepper::Track(p) => p.process(img)?,
            Stepper::Baseline(b) => b.step(img)?,
        })
    }
}

/// Process one frame directory, decoding frames as they are needed.
fn process_video<C: Clock>(
    dir: &Path,
    method: Method,
    models: &Models,
    clock: C,
    annotate_dir: Option<&Path>,
) -> Result<Vec<FrameResult>, DtdError> {
    let source = load_frames(dir)?;
    if source.is_empty() {
        return Err(DtdError::Invalid(format!("{}: no .pgm or .png frames", dir.display())));
    }
    if let Some(d) = annotate_dir {
        fs::create_dir_all(d).map_err(|e| DtdError::io(d, e))?;
    }
    let names: Vec<PathBuf> = source.paths().to_vec();
    let mut stepper = Stepper::new(method, models, clock);
    let mut results = Vec::with_capacity(names.len());
    for (frame, name) in source.zip(&names) {
        let img = frame?;
        let r = stepper.step(&img)?;
        if let Some(d) = annotate_dir {
            let stem = name.file_stem().map(|s| s.to_os_string()).unwrap_or_default();
            let path = d.join(stem).with_extension("pgm");
            write_pgm(&path, &annotate(&img, &r))?;
        }
        results.push(r);
    }
    Ok(results)
}

fn process_with_clock(
    dir: &Path,
    method: Method,
    models: &Models,
    no_timings: bool,
    annotate_dir: Option<&Path>,
) -> Result<Vec<FrameResult>, DtdError> {
    if no_timings {
        process_video(dir, method, models, FrozenClock, annotate_dir)
    } else {
        process_video(dir, method, models, MonotonicClock::new(), annotate_dir)
    }
}

fn video_name(dir: &Path) -> String {
    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "video".into())
}

fn cmd_run(a: RunArgs, method: Method) -> Result<(), CliError> {
    let models = load_models(&a.models)?;
    if a.frames.len() == 1 {
        let results = process_with_clock(&a.frames[0], method, &models, a.no_timings, a.dump_annotated.as_deref())?;
        match &a.out {
            Some(p) => write_results(p, &results)?,
            None => {
                let records: Vec<FrameRecord> = results.iter().map(FrameRecord::from_result).collect();
                write_records(BufWriter::new(io::stdout().lock()), &records, Some(&TimingSummary::of(&results)))?;
            }
        }
        report_counts(&results);
        return Ok(());
    }
    let Some(out_dir) = &a.out else {
        return Err(CliError::Usage("--out must name a directory when several --frames are given".into()));
    };
    fs::create_dir_all(out_dir).map_err(|e| DtdError::io(out_dir, e))?;
    let mut names: Vec<String> = a.frames.iter().map(|d| video_name(d)).collect();
    names.sort();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(CliError::Usage("--frames directories must have distinct names".into()));
    }
    let job = |dir: &PathBuf| -> Result<(), DtdError> {
        let name = video_name(dir);
        let annotate_dir = a.dump_annotated.as_ref().map(|d| d.join(&name));
        let results = process_with_clock(dir, method, &models, a.no_timings, annotate_dir.as_deref())?;
        write_results(&out_dir.join(format!("{name}.jsonl")), &results)
    };
    if a.parallel_videos {
        a.frames.par_iter().try_for_each(job)?;
    } else {
        a.frames.iter().try_for_each(job)?;
    }
    Ok(())
}

fn report_counts(results: &[FrameResult]) {
    let s = TimingSummary::of(results);
    let counts: Vec<String> = FrameStatus::ALL
        .iter()
        .map(|st| format!("{st:?}={}", s.status_counts.get(*st)))
        .collect();
    eprintln!("frames: {}  {}", s.frames, counts.join(" "));
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    let models = load_models(&a.models)?;
    let frames = load_all_frames(&a.frames)?;
    if frames.is_empty() {
        return Err(DtdError::Invalid(format!("{}: no .pgm or .png frames", a.frames.display())).into());
    }
    let clock = MonotonicClock::new();
    let dtd = dtd_core::pipeline::run(&frames, &models, clock).map_err(DtdError::from)?;
    let base = dtd_core::pipeline::run_baseline_frame_by_frame(&frames, &models, clock).map_err(DtdError::from)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir).map_err(|e| DtdError::io(dir, e))?;
        write_results(&dir.join("dtd.jsonl"), &dtd)?;
        write_results(&dir.join("baseline.jsonl"), &base)?;
    }
    let mut out = io::stdout().lock();
    write_comparison(&mut out, &dtd, &base)?;
    Ok(())
}

/// Per-stage table, status counts, the local-vs-global check and the
/// speedup line (ratio of median per-frame totals).
pub fn write_comparison<W: Write>(out: &mut W, dtd: &[FrameResult], base: &[FrameResult]) -> io::Result<()> {
    let sd = TimingSummary::of(dtd);
    let sb = TimingSummary::of(base);
    writeln!(out, "frames: {}", sd.frames)?;
    writeln!(
        out,
        "{:<14} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "stage (ms)", "dtd mean", "dtd med", "dtd p95", "base mean", "base med", "base p95"
    )?;
    for ((name, d), (_, b)) in sd.stages().iter().zip(sb.stages().iter()) {
        writeln!(
            out,
            "{:<14} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}",
            name, d.mean, d.median, d.p95, b.mean, b.median, b.p95
        )?;
    }
    for st in FrameStatus::ALL {
        writeln!(out, "status {:<18} dtd {:>5}  baseline {:>5}", format!("{st:?}"), sd.status_counts.get(st), sb.status_counts.get(st))?;
    }
    let (tracked, slower) = local_vs_global(dtd, base);
    writeln!(out, "tracked frames with local_detect >= baseline global_detect: {slower} of {tracked}")?;
    writeln!(out, "median total: dtd {:.3} ms, baseline {:.3} ms", sd.total.median, sb.total.median)?;
    writeln!(out, "speedup: {:.3}x", speedup(&sd, &sb))?;
    Ok(())
}

/// Baseline median total over tracker median total.
pub fn speedup(dtd: &TimingSummary, base: &TimingSummary) -> f64 {
    base.total.median / dtd.total.median
}

/// (tracked frames, tracked frames whose local scan took at least as long
/// as the baseline's full scan of the same frame).
pub fn local_vs_global(dtd: &[FrameResult], base: &[FrameResult]) -> (usize, usize) {
    let mut tracked = 0;
    let mut slower = 0;
    for (d, b) in dtd.iter().zip(base) {
        if d.status == FrameStatus::TrackedValidated {
            tracked += 1;
            if d.timings.local_detect >= b.timings.global_detect {
                slower += 1;
            }
        }
    }
    (tracked, slower)
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let mut scene = SyntheticSceneSpec::wandering(a.width, a.height, a.num_frames, a.face_size, a.max_step, a.seed);
    if let Some((start, len)) = a.occlude {
        if start >= a.num_frames {
            return Err(CliError::Usage(format!("--occlude start {start} is past the last frame")));
        }
        scene = scene.with_occlusion(start, start + len);
    }
    scene.validate().map_err(DtdError::from)?;
    fs::create_dir_all(&a.out).map_err(|e| DtdError::io(&a.out, e))?;
    let background = scene.background();
    let mut truth = Vec::with_capacity(scene.num_frames());
    for t in 0..scene.num_frames() {
        let frame = scene.render_frame_on(&background, t);
        write_pgm(&a.out.join(format!("frame_{t:05}.pgm")), &frame)?;
        truth.push(scene.truth(t));
    }
    write_ground_truth(&a.out.join("ground_truth.jsonl"), &truth)?;
    write_json(&a.out.join("scene.json"), &scene)?;
    eprintln!("wrote {} frames to {}", scene.num_frames(), a.out.display());
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let results = read_records(&a.results)?;
    let truth = read_records(&a.truth)?;
    let r = evaluate(&results.records, &truth.records);
    let mut out = io::stdout().lock();
    writeln!(out, "visible_frames: {}", r.visible_frames)?;
    writeln!(out, "evaluated_frames: {}", r.evaluated_frames)?;
    writeln!(out, "mean_px: {}", r.mean_px)?;
    writeln!(out, "rms_px: {}", r.rms_px)?;
    writeln!(out, "mean_rms_fraction: {}", r.mean_rms_fraction)?;
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let spec = match &a.net_config {
        Some(p) => load_net_config(p)?,
        None => CascadeSpec::toy(),
    };
    let mut cfg = CascadeTrainConfig { seed: a.seed, ..CascadeTrainConfig::default() };
    cfg.base_faces = a.base_faces.unwrap_or(cfg.base_faces);
    cfg.level1.epochs = a.level1_epochs.unwrap_or(cfg.level1.epochs);
    cfg.local.epochs = a.local_epochs.unwrap_or(cfg.local.epochs);
    let (cascade, reports) = train_cascade_parallel(&spec, &cfg).map_err(DtdError::from)?;
    for (net, rep) in spec.networks.iter().zip(&reports) {
        let first = rep.loss_history.first().copied().unwrap_or(f64::NAN);
        let last = rep.loss_history.last().copied().unwrap_or(f64::NAN);
        eprintln!("{:<6} loss {first:.6} -> {last:.6}", net.name);
    }
    save_weights(&a.out, &cascade)?;
    if let Some(p) = &a.write_net_config {
        write_json(p, &spec)?;
    }
    Ok(())
}
