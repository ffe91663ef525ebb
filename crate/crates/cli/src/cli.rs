//! Argument parsing and command dispatch. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 numerical failure.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use posefuse_core::dataio::poses::read_poses;
use posefuse_core::dataio::synth::{synth_sequence, MotionProfile, SynthNoise, SynthSpec};
use posefuse_core::dataio::{read_model_points, Sequence};
use posefuse_core::metrics::{EvaluationOptions, EvaluationReport, DEFAULT_POSE_THRESHOLDS};
use posefuse_core::se3::Vec3;
use posefuse_core::{Error, Result};

use crate::config::PipelineConfig;
use crate::pipeline;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "posefuse", version, about = "Object-pose trajectory smoothing, fusion and evaluation")]
pub struct Cli {
    /// Pipeline configuration (TOML with sections); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every stochastic step (generator and RANSAC).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; sequences given to one command are processed in parallel.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sequence with ground truth.
    Synth(SynthArgs),
    /// Smooth the absolute poses of each sequence.
    Smooth(StageArgs),
    /// Register point tracks between frame pairs of each sequence.
    Relpose(StageArgs),
    /// Fuse smoothed and relative poses in a pose graph.
    Optimize(OptimizeArgs),
    /// Run smooth, relpose and optimize in turn.
    Run(StageArgs),
    /// Compare an estimated trajectory with a reference.
    Evaluate(EvaluateArgs),
    /// Write the overlay bundle for visual review.
    ExportOverlays(StageArgs),
    /// Serve bundles, frames and override files to the review UI.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output sequence directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, default_value_t = 500)]
    pub frames: usize,
    #[arg(long, default_value_t = 15.0)]
    pub rate: f64,
    /// static, constant-velocity or handheld.
    #[arg(long, default_value = "handheld")]
    pub motion: String,
    /// Disable every noise source.
    #[arg(long)]
    pub zero_noise: bool,
    /// Absolute pose noise per axis, millimetres.
    #[arg(long)]
    pub abs_trans_mm: Option<f64>,
    /// Absolute pose noise per axis, degrees.
    #[arg(long)]
    pub abs_rot_deg: Option<f64>,
    /// Track noise, pixels.
    #[arg(long)]
    pub track_px: Option<f64>,
    /// Depth noise, millimetres.
    #[arg(long)]
    pub depth_mm: Option<f64>,
    /// Number of randomly placed corrupted absolute poses.
    #[arg(long, default_value_t = 0, conflicts_with = "corrupt_frames")]
    pub corrupt: usize,
    /// Explicit corrupted frames, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub corrupt_frames: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct StageArgs {
    /// Sequence directories.
    #[arg(required = true)]
    pub seq: Vec<PathBuf>,
    /// Output file (only with a single sequence); defaults to the configured name
    /// inside the sequence directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub stage: StageArgs,
    /// Override file; defaults to the configured name inside the sequence directory
    /// when present.
    #[arg(long)]
    pub overrides: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Estimated trajectory.
    #[arg(long)]
    pub estimate: PathBuf,
    /// Reference trajectory; defaults to the ground truth of `--seq`.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Sequence supplying defaults for the reference, model and extents.
    #[arg(long)]
    pub seq: Option<PathBuf>,
    /// Model points for ADD / ADD-S.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Box extents `x,y,z` in meters for 3D IoU.
    #[arg(long, value_delimiter = ',')]
    pub extents: Option<Vec<f64>>,
    /// Rigidly align the estimate to the reference first.
    #[arg(long)]
    pub align: bool,
    /// RPE frame step.
    #[arg(long, default_value_t = 1)]
    pub delta: usize,
    /// Recall thresholds as `deg:cm`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Vec<String>,
    /// Write the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory holding one subdirectory per sequence.
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INVALID
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.ransac.seed = s;
    }
    Ok(cfg)
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .try_init();
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::Synth(a) => synth(a, cli.seed.unwrap_or(0)),
        Command::Smooth(a) => pool.install(|| per_sequence(a, |d, out| pipeline::run_smooth(d, &cfg, out).map(|_| ()))),
        Command::Relpose(a) => pool.install(|| per_sequence(a, |d, out| pipeline::run_relpose(d, &cfg, out).map(|_| ()))),
        Command::Optimize(a) => pool.install(|| {
            per_sequence(&a.stage, |d, out| {
                pipeline::run_optimize(d, &cfg, a.overrides.as_deref(), out).map(|_| ())
            })
        }),
        Command::Run(a) => {
            if a.out.is_some() {
                return Err(Error::InvalidArgument("run writes the configured file names; --out is not accepted".into()));
            }
            pool.install(|| per_sequence(a, |d, _| pipeline::run_all(d, &cfg).map(|_| ())))
        }
        Command::ExportOverlays(a) => pool.install(|| per_sequence(a, |d, out| pipeline::run_export(d, &cfg, out).map(|_| ()))),
        Command::Evaluate(a) => pool.install(|| evaluate(a, &cfg)),
        Command::Serve(a) => serve(a, &cfg),
    }
}

/// Runs `f` on every sequence, in parallel, reporting each failure with its sequence.
/// The first failure in argument order decides the returned error.
fn per_sequence<F>(args: &StageArgs, f: F) -> Result<()>
where
    F: Fn(&Path, Option<&Path>) -> Result<()> + Sync,
{
    if args.out.is_some() && args.seq.len() > 1 {
        return Err(Error::InvalidArgument("--out needs exactly one sequence".into()));
    }
    let results: Vec<Result<()>> = args.seq.par_iter().map(|d| f(d, args.out.as_deref())).collect();
    let mut first = None;
    for (dir, r) in args.seq.iter().zip(results) {
        if let Err(e) = r {
            eprintln!("error: {}: {e}", dir.display());
            first.get_or_insert(e);
        }
    }
    first.map_or(Ok(()), Err)
}

fn synth(a: &SynthArgs, seed: u64) -> Result<()> {
    let mut noise = if a.zero_noise { SynthNoise::zero() } else { SynthNoise::default() };
    if let Some(v) = a.abs_trans_mm {
        noise.abs_trans = v / 1000.0;
    }
    if let Some(v) = a.abs_rot_deg {
        noise.abs_rot = v.to_radians();
    }
    if let Some(v) = a.track_px {
        noise.track_px = v;
    }
    if let Some(v) = a.depth_mm {
        noise.depth = v / 1000.0;
    }
    let id = match &a.id {
        Some(id) => id.clone(),
        None => a
            .out
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "synth".into()),
    };
    let spec = SynthSpec {
        sequence_id: id,
        frames: a.frames,
        rate_hz: a.rate,
        motion: MotionProfile::from_str(&a.motion)?,
        noise,
        corrupted_frames: a.corrupt_frames.clone(),
        seed,
        ..SynthSpec::default()
    };
    let spec = if a.corrupt > 0 { spec.with_random_corruptions(a.corrupt)? } else { spec };
    synth_sequence(&spec, &a.out)?;
    Ok(())
}

fn parse_threshold(s: &str) -> Result<(f64, f64)> {
    let bad = || Error::InvalidArgument(format!("threshold '{s}' is not deg:cm"));
    let (d, c) = s.split_once(':').ok_or_else(bad)?;
    let d: f64 = d.trim().parse().map_err(|_| bad())?;
    let c: f64 = c.trim().parse().map_err(|_| bad())?;
    if !(d > 0.0 && c > 0.0 && d.is_finite() && c.is_finite()) {
        return Err(bad());
    }
    Ok((d, c))
}

fn evaluate(a: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let seq = a.seq.as_deref().map(Sequence::open).transpose()?;
    let estimate = read_poses(&a.estimate)?;
    let reference = match (&a.reference, &seq) {
        (Some(p), _) => read_poses(p)?,
        (None, Some(s)) => s
            .ground_truth()?
            .ok_or_else(|| Error::InvalidInput(format!("{}: no ground truth in manifest", s.id())))?,
        (None, None) => return Err(Error::InvalidArgument("--reference or --seq is required".into())),
    };
    let model = match (&a.model, &seq) {
        (Some(p), _) => Some(read_model_points(p)?),
        (None, Some(s)) => Some(s.model()?),
        (None, None) => None,
    };
    let extents = match (&a.extents, &seq) {
        (Some(e), _) => match e[..] {
            [x, y, z] => Some(Vec3::new(x, y, z)),
            _ => return Err(Error::InvalidArgument(format!("--extents needs x,y,z, got {} values", e.len()))),
        },
        (None, Some(s)) => s.manifest.extents.map(Vec3::from),
        (None, None) => None,
    };
    let opts = EvaluationOptions {
        align: a.align,
        rpe_delta: a.delta,
        pose_thresholds: if a.thresholds.is_empty() {
            DEFAULT_POSE_THRESHOLDS.to_vec()
        } else {
            a.thresholds.iter().map(|s| parse_threshold(s)).collect::<Result<_>>()?
        },
    };
    let report = pipeline::evaluate_trajectories(&estimate, &reference, model.as_ref(), extents.as_ref(), &opts)?;
    print!("{report}");
    let out = a.out.clone().or_else(|| seq.as_ref().map(|s| s.path(&cfg.paths.report)));
    if let Some(p) = out {
        write_report(&p, &report)?;
    }
    Ok(())
}

pub fn write_report(path: &Path, report: &EvaluationReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn read_report(path: &Path) -> Result<EvaluationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn serve(a: &ServeArgs, cfg: &PipelineConfig) -> Result<()> {
    if !a.root.is_dir() {
        return Err(Error::InvalidArgument(format!("{} is not a directory", a.root.display())));
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::InvalidArgument(format!("runtime: {e}")))?;
    rt.block_on(crate::server::serve(a.addr, a.root.clone(), cfg.paths.clone()))
        .map_err(|e| Error::InvalidArgument(format!("serve on {}: {e}", a.addr)))
}
