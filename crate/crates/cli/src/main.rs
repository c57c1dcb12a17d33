//! `lutsr`: command-line pipelines over the lutsr engine.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 I/O failure, 4 validation
//! failure. See docs/FORMATS.md for every file format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use lutsr_bench::{bench_with_fixture, BenchConfig, BenchFixture, BenchMode, BenchReport};
use lutsr_builder as builder;
use lutsr_core::lut::{check_interval, load_bank, lut_size_bytes, save_bank};
use lutsr_core::model::ModelShape;
use lutsr_core::temporal::{MotionField, MACRO_BLOCK, SEARCH_RADIUS};
use lutsr_core::{Frame, Model, OrderTable};
use lutsr_degrade::{
    block_match_motion, generate_dataset, list_frames, load_dataset, load_trace, synth_clip, Dataset, Profile,
    RateControl, SimConfig, DEFAULT_FPS,
};
use lutsr_train::{evaluate, train, training_frames, EvalReport, TrainConfig};

const EXIT_ARGS: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Debug)]
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn args(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_ARGS,
            msg: msg.into(),
        }
    }

    fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            msg: msg.into(),
        }
    }
}

impl From<lutsr_core::Error> for Failure {
    fn from(e: lutsr_core::Error) -> Self {
        let code = if e.is_io() { EXIT_IO } else { EXIT_VALIDATION };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            msg: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self {
            code: EXIT_IO,
            msg: e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Attach the offending path to I/O failures.
fn at<T>(path: &Path, r: Result<T, lutsr_core::Error>) -> CliResult<T> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.msg = format!("{}: {}", path.display(), f.msg);
        f
    })
}

#[derive(Parser, Debug)]
#[command(
    name = "lutsr",
    version,
    about = "Fused expert-LUT video super-resolution pipelines",
    after_help = "Exit codes: 0 ok, 2 bad arguments, 3 I/O error, 4 validation failure.\n\
                  File formats are documented in docs/FORMATS.md."
)]
struct Cli {
    /// Worker threads (0 = one per core). Output bytes do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a procedural RGB test clip as numbered PNG frames.
    SynthClip(SynthArgs),
    /// Degrade HR frames into an LR/HR dataset (bicubic x4, block DCT, rate control, motion).
    Simulate(SimulateArgs),
    /// Transfer closed-form oracles into an expert LUT bank.
    BuildLut(BuildLutArgs),
    /// Train the weight predictor and temporal branch against a frozen bank.
    Train(TrainArgs),
    /// Super-resolve a frame sequence in arrival order.
    Upscale(UpscaleArgs),
    /// Score a model on one or more datasets (PSNR over RGB, SSIM on luma).
    Eval(EvalArgs),
    /// Time the interpolation paths on a fixed-seed random frame.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Output directory for frame_NNNNN.png.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Directory of HR PNG frames (sorted by name; sizes divisible by 4).
    #[arg(long)]
    input: PathBuf,
    /// Dataset directory to create.
    #[arg(long)]
    out: PathBuf,
    /// Named bandwidth profile: 100kbps, 500kbps or 1mbps.
    #[arg(long, group = "rate")]
    profile: Option<String>,
    /// Bandwidth trace file: one positive integer (bits per frame) per line.
    #[arg(long, group = "rate")]
    trace: Option<PathBuf>,
    /// Comma-separated QPs cycled frame by frame; disables rate control and drops.
    #[arg(long, group = "rate", value_delimiter = ',')]
    fixed_qp: Option<Vec<u8>>,
    #[arg(long, default_value_t = DEFAULT_FPS)]
    fps: f64,
    /// Disable the synthetic per-macro-block texture QP modulation.
    #[arg(long)]
    no_modulation: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BuildLutArgs {
    /// Oracle family: nearest, bilinear, sharpen or qp_adaptive.
    #[arg(long, default_value = "qp_adaptive")]
    oracle: String,
    /// Comma-separated, strictly increasing QP labels; one expert each.
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50")]
    qp_labels: Vec<u32>,
    /// Lattice sampling interval (power of two dividing 256).
    #[arg(long, default_value_t = 16)]
    interval: u32,
    #[arg(long, default_value_t = 4)]
    scale: u32,
    /// Output bank file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory written by `simulate` (repeatable).
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    /// Expert bank file.
    #[arg(long)]
    bank: PathBuf,
    /// Output weight container.
    #[arg(long)]
    out: PathBuf,
    /// Training log (JSON lines). Epoch summaries also go to stderr.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Start from these weights instead of a seeded initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// LR patch side, clamped to the frame size.
    #[arg(long, default_value_t = 48)]
    patch: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    beta2: f64,
    /// Charbonnier epsilon.
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,
    /// Random crops per training frame per epoch.
    #[arg(long, default_value_t = 4)]
    crops_per_frame: usize,
    /// Hidden channels of both networks (new models only).
    #[arg(long, default_value_t = 64)]
    width: usize,
    /// Also update LUT entries; requires --bank-out.
    #[arg(long, requires = "bank_out")]
    finetune_luts: bool,
    /// Where to write the fine-tuned bank.
    #[arg(long)]
    bank_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["dataset", "input"])))]
struct UpscaleArgs {
    /// Dataset directory: received frames are upscaled with their stored motion.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Plain directory of LR PNG frames; motion comes from block matching.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    /// Output directory for sr_NNNNN.png.
    #[arg(long)]
    out: PathBuf,
    /// Spatial branch only (skip the temporal residual).
    #[arg(long)]
    no_temporal: bool,
    /// Print per-frame latency.
    #[arg(long)]
    timing: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Jsonl,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Dataset directory (repeatable); one table row each.
    #[arg(long, required = true)]
    dataset: Vec<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    no_temporal: bool,
    /// Also write per-profile and per-frame records here (JSON lines).
    #[arg(long)]
    records: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// reference_branchy, order_table, tetralinear, fused_n6, srlut_rot4 or all.
    #[arg(long, default_value = "all")]
    mode: String,
    /// LR frame size WIDTHxHEIGHT.
    #[arg(long, default_value = "320x180")]
    size: String,
    #[arg(long, default_value_t = 10)]
    iters: usize,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 16)]
    interval: u32,
    #[arg(long, default_value_t = 4)]
    scale: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

// Stdout writes that tolerate a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ARGS } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Failure::args(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::SynthClip(a) => cmd_synth(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::BuildLut(a) => cmd_build_lut(a),
        Command::Train(a) => cmd_train(a),
        Command::Upscale(a) => cmd_upscale(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a, cli.threads),
    }
}

fn cmd_synth(a: SynthArgs) -> CliResult {
    if !a.width.is_multiple_of(4) || !a.height.is_multiple_of(4) || a.width == 0 || a.height == 0 {
        return Err(Failure::args("--width and --height must be positive multiples of 4"));
    }
    let frames = synth_clip(a.frames, a.width, a.height, a.seed)?;
    fs::create_dir_all(&a.out)?;
    frames.par_iter().enumerate().try_for_each(|(i, f)| {
        let p = a.out.join(format!("frame_{i:05}.png"));
        at(&p, f.save_png(&p))
    })?;
    outln!(
        "wrote {} frames of {}x{} to {}",
        a.frames,
        a.width,
        a.height,
        a.out.display()
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let rate = match (a.profile, a.trace, a.fixed_qp) {
        (Some(p), None, None) => RateControl::Profile(p.parse::<Profile>().map_err(|e| Failure::args(e.to_string()))?),
        (None, Some(t), None) => RateControl::Trace(at(&t, load_trace(&t))?),
        (None, None, Some(q)) => {
            if q.is_empty() || q.iter().any(|&v| v > 50) {
                return Err(Failure::args("--fixed-qp values must lie in [0, 50]"));
            }
            RateControl::FixedQp(q)
        }
        (None, None, None) => RateControl::Profile(Profile::K500),
        _ => unreachable!("clap enforces the rate group"),
    };
    if !(a.fps > 0.0 && a.fps.is_finite()) {
        return Err(Failure::args("--fps must be positive"));
    }
    if !a.input.is_dir() {
        return Err(Failure {
            code: EXIT_IO,
            msg: format!("{}: not a readable directory", a.input.display()),
        });
    }
    let cfg = SimConfig {
        rate,
        fps: a.fps,
        seed: a.seed,
        modulation: !a.no_modulation,
    };
    let manifest = generate_dataset(&a.input, &cfg, &a.out)?;
    let received: Vec<_> = manifest.iter().filter(|m| !m.dropped).collect();
    let qp = received.iter().filter_map(|m| m.qp_mean).sum::<f64>() / received.len().max(1) as f64;
    outln!(
        "{} frames, {} dropped, mean QP {:.2} -> {}",
        manifest.len(),
        manifest.len() - received.len(),
        qp,
        a.out.display()
    );
    Ok(())
}

fn cmd_build_lut(a: BuildLutArgs) -> CliResult {
    check_interval(a.interval).map_err(|e| Failure::args(e.to_string()))?;
    if a.interval < 2 {
        return Err(Failure::args(
            "interval 1 is the uncompressed table and cannot be materialized",
        ));
    }
    if a.scale == 0 {
        return Err(Failure::args("--scale must be positive"));
    }
    a.oracle
        .parse::<builder::OracleKind>()
        .map_err(|e| Failure::args(e.to_string()))?;
    if a.qp_labels.is_empty() || a.qp_labels.windows(2).any(|w| w[0] >= w[1]) || a.qp_labels.iter().any(|&q| q > 50) {
        return Err(Failure::args(
            "--qp-labels must be strictly increasing values in [0, 50]",
        ));
    }
    let bank = builder::build_bank(&a.qp_labels, &a.oracle, a.interval, a.scale as usize)?;
    at(&a.out, save_bank(&bank, &a.out))?;
    let payload = lut_size_bytes(a.interval, a.scale, a.qp_labels.len() as u32)?;
    let file = fs::metadata(&a.out)?.len();
    outln!(
        "{} expert(s), interval {}, scale {}: payload {} bytes ({:.3} MiB), file {} bytes -> {}",
        bank.len(),
        a.interval,
        a.scale,
        payload,
        payload as f64 / (1024.0 * 1024.0),
        file,
        a.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> CliResult<Model> {
    at(path, Model::load(path))
}

fn order_table(interval: u32) -> CliResult<OrderTable> {
    OrderTable::build(interval).map_err(|e| Failure::validation(format!("bank interval {interval}: {e}")))
}

fn cmd_train(a: TrainArgs) -> CliResult {
    let cfg = TrainConfig {
        patch: a.patch,
        batch: a.batch,
        lr: a.lr,
        beta1: a.beta1,
        beta2: a.beta2,
        epochs: a.epochs,
        seed: a.seed,
        eps: a.eps,
        finetune_luts: a.finetune_luts,
        crops_per_frame: a.crops_per_frame,
    };
    cfg.validate().map_err(|e| Failure::args(e.to_string()))?;
    if a.width == 0 {
        return Err(Failure::args("--width must be positive"));
    }
    let mut bank = at(&a.bank, load_bank(&a.bank))?;
    let table = order_table(bank.interval())?;
    let mut model = match &a.init {
        Some(p) => load_model(p)?,
        None => Model::init(
            ModelShape {
                width: a.width,
                ..ModelShape::new(bank.len(), bank.scale())
            },
            a.seed,
        )?,
    };
    let mut frames = Vec::new();
    for d in &a.dataset {
        let ds = at(d, load_dataset(d))?;
        frames.extend(training_frames::<f32>(&ds, bank.scale())?);
    }
    let mut log_file = match &a.log {
        Some(p) => Some(fs::File::create(p).map_err(|e| Failure::from(e).with_path(p))?),
        None => None,
    };
    train(&cfg, &frames, &mut bank, &table, &mut model, |r| {
        if let Some(f) = log_file.as_mut() {
            serde_json::to_writer(&mut *f, r)?;
            f.write_all(b"\n")?;
        }
        if r.kind == "epoch" {
            let loss = r.loss.map_or("-".to_string(), |l| format!("{l:.6}"));
            eprintln!(
                "epoch {:>3}  step {:>5}  loss {loss}  val_psnr {}",
                r.epoch, r.step, r.val_psnr
            );
        }
        Ok(())
    })?;
    at(&a.out, model.save(&a.out))?;
    if let Some(p) = &a.bank_out {
        at(p, save_bank(&bank, p))?;
    }
    outln!("wrote {}", a.out.display());
    Ok(())
}

impl Failure {
    fn with_path(mut self, p: &Path) -> Self {
        self.msg = format!("{}: {}", p.display(), self.msg);
        self
    }
}

/// Frames in arrival order: (output index, LR frame, previous received LR, motion).
type Arrival = (usize, Frame, Option<Frame>, Option<MotionField>);

fn arrivals_from_dataset(ds: &Dataset) -> Vec<Arrival> {
    ds.received()
        .map(|s| {
            let prev = s.prev.and_then(|p| ds.sample(p)).and_then(|p| p.lr.clone());
            (s.index, s.lr.clone().expect("received"), prev, Some(s.motion.clone()))
        })
        .collect()
}

fn arrivals_from_dir(dir: &Path) -> CliResult<Vec<Arrival>> {
    let paths = at(dir, list_frames(dir))?;
    let mut out: Vec<Arrival> = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let f = at(p, Frame::load_png(p))?;
        let (prev, motion) = match out.last() {
            Some((_, prev, _, _)) => {
                if !prev.same_shape(&f) {
                    return Err(Failure::validation(format!(
                        "{}: frame size changes mid-sequence",
                        p.display()
                    )));
                }
                let m = block_match_motion(&prev.luma(), &f.luma(), MACRO_BLOCK, SEARCH_RADIUS)?;
                (Some(prev.clone()), Some(m))
            }
            None => (None, None),
        };
        out.push((i, f, prev, motion));
    }
    Ok(out)
}

fn cmd_upscale(a: UpscaleArgs) -> CliResult {
    let bank = at(&a.bank, load_bank(&a.bank))?;
    let model = load_model(&a.weights)?;
    model.check_bank(&bank)?;
    let table = order_table(bank.interval())?;
    let frames = match (&a.dataset, &a.input) {
        (Some(d), None) => arrivals_from_dataset(&at(d, load_dataset(d))?),
        (None, Some(i)) => arrivals_from_dir(i)?,
        _ => unreachable!("clap enforces the source group"),
    };
    fs::create_dir_all(&a.out)?;
    let mut total = 0.0;
    for (index, lr, prev, motion) in &frames {
        let t = Instant::now();
        let sr = model.upscale(&bank, &table, lr, prev.as_ref(), motion.as_ref(), !a.no_temporal)?;
        let ms = t.elapsed().as_secs_f64() * 1e3;
        total += ms;
        let p = a.out.join(format!("sr_{index:05}.png"));
        at(&p, sr.save_png(&p))?;
        if a.timing {
            outln!(
                "frame {index:05}  {}x{} -> {}x{}  {ms:.3} ms",
                lr.width(),
                lr.height(),
                sr.width(),
                sr.height()
            );
        }
    }
    if a.timing && !frames.is_empty() {
        outln!(
            "mean {:.3} ms/frame over {} frames",
            total / frames.len() as f64,
            frames.len()
        );
    }
    outln!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(())
}

fn eval_table(reports: &[EvalReport]) -> String {
    let mut s = format!("{:<12} {:>9} {:>10} {:>8}\n", "profile", "frames", "psnr_db", "ssim");
    for r in reports {
        let psnr = match &r.mean_psnr {
            serde_json::Value::Number(n) => format!("{:.3}", n.as_f64().unwrap_or(f64::NAN)),
            other => other.as_str().unwrap_or("-").to_string(),
        };
        s += &format!(
            "{:<12} {:>9} {:>10} {:>8.4}\n",
            r.profile,
            format!("{}/{}", r.frames_evaluated, r.frames_total),
            psnr,
            r.mean_ssim
        );
    }
    s
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let bank = at(&a.bank, load_bank(&a.bank))?;
    let model = load_model(&a.weights)?;
    model.check_bank(&bank)?;
    let table = order_table(bank.interval())?;
    let mut reports = Vec::new();
    for d in &a.dataset {
        let ds = at(d, load_dataset(d))?;
        reports.push(evaluate(&model, &bank, &table, &ds, !a.no_temporal)?);
    }
    let mut lines = Vec::new();
    for r in &reports {
        lines.push(serde_json::json!({
            "record": "profile",
            "profile": r.profile,
            "temporal": r.temporal,
            "frames_total": r.frames_total,
            "frames_evaluated": r.frames_evaluated,
            "mean_psnr": r.mean_psnr,
            "mean_ssim": r.mean_ssim,
            "ssim_channel": r.ssim_channel,
        }));
        for f in &r.per_frame {
            lines.push(serde_json::json!({
                "record": "frame",
                "profile": r.profile,
                "index": f.index,
                "psnr": f.psnr,
                "ssim": f.ssim,
            }));
        }
    }
    let jsonl: String = lines.iter().map(|l| l.to_string() + "\n").collect();
    if let Some(p) = &a.records {
        fs::write(p, &jsonl).map_err(|e| Failure::from(e).with_path(p))?;
    }
    match a.format {
        Format::Table => out!("{}", eval_table(&reports)),
        Format::Jsonl => out!("{jsonl}"),
    }
    Ok(())
}

fn parse_size(s: &str) -> CliResult<(usize, usize)> {
    let bad = || Failure::args(format!("--size must look like 320x180, got {s:?}"));
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    let (w, h): (usize, usize) = (w.parse().map_err(|_| bad())?, h.parse().map_err(|_| bad())?);
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn bench_table(reports: &[BenchReport]) -> String {
    let mut s = format!(
        "{:<18} {:>9} {:>3} {:>10} {:>10} {:>10} {:>9} {:>8} {:>6}  verified\n",
        "mode", "size", "thr", "min_ms", "median_ms", "mean_ms", "fps", "fetch/sp", "mul/sp"
    );
    for r in reports {
        s += &format!(
            "{:<18} {:>9} {:>3} {:>10.3} {:>10.3} {:>10.3} {:>9.2} {:>8.1} {:>6.1}  {}\n",
            r.mode,
            format!("{}x{}", r.width, r.height),
            r.threads,
            r.min_ms,
            r.median_ms,
            r.mean_ms,
            r.fps,
            r.fetches_per_subpixel,
            r.muls_per_subpixel,
            if r.verified_against.is_empty() {
                "-".to_string()
            } else {
                r.verified_against.join(",")
            }
        );
    }
    s
}

fn cmd_bench(a: BenchArgs, threads: usize) -> CliResult {
    let modes: Vec<BenchMode> = if a.mode == "all" {
        BenchMode::ALL.to_vec()
    } else {
        vec![a
            .mode
            .parse()
            .map_err(|e: lutsr_core::Error| Failure::args(e.to_string()))?]
    };
    let (width, height) = parse_size(&a.size)?;
    if a.iters == 0 {
        return Err(Failure::args("--iters must be positive"));
    }
    check_interval(a.interval).map_err(|e| Failure::args(e.to_string()))?;
    let fixture =
        BenchFixture::new(width, height, a.interval, a.scale, a.seed).map_err(|e| Failure::args(e.to_string()))?;
    let threads = if threads == 0 { 1 } else { threads };
    let mut reports = Vec::new();
    for mode in modes {
        let cfg = BenchConfig {
            mode,
            width,
            height,
            iters: a.iters,
            warmup: a.warmup,
            threads,
            interval: a.interval,
            scale: a.scale,
            seed: a.seed,
        };
        let r = bench_with_fixture(&fixture, &cfg).map_err(|e| Failure::validation(e.to_string()))?;
        if a.format == Format::Jsonl {
            outln!("{}", serde_json::to_string(&r)?);
        }
        reports.push(r);
    }
    if a.format == Format::Table {
        out!("{}", bench_table(&reports));
        let by = |m: &str| reports.iter().find(|r| r.mode == m);
        if let (Some(r), Some(f)) = (by("reference_branchy"), by("order_table")) {
            outln!(
                "order_table speedup over reference_branchy: {:.2}x",
                r.median_ms / f.median_ms
            );
        }
    }
    Ok(())
}
