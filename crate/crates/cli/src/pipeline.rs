//! The processing stages. Each reads its inputs from the sequence directory and
//! writes one output file there, so stages can run and be checked independently.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use posefuse_core::dataio::overlay::{export_overlays, write_overlay_bundle, OverlayBundle};
use posefuse_core::dataio::overrides::{read_overrides, OverrideFile};
use posefuse_core::dataio::poses::{read_poses, write_poses};
use posefuse_core::dataio::relatives::{read_relatives, write_relatives};
use posefuse_core::dataio::{DepthMap, Mask, Sequence};
use posefuse_core::metrics::{evaluate, EvaluationOptions, EvaluationReport, ModelPoints, TrajectoryPair};
use posefuse_core::pose_graph::{build_graph, optimize, OptimizationResult};
use posefuse_core::relpose::{backproject, information_matrix, pair_topology, register, FrameView, RelativePoseEstimate};
use posefuse_core::se3::{Pose, Vec3};
use posefuse_core::smoother::{smooth, SmoothedTrajectory};
use posefuse_core::{Error, Result};

use crate::config::PipelineConfig;

pub fn open(dir: &Path) -> Result<Sequence> {
    Sequence::open(dir)
}

/// RTS-smoothed absolute poses over the measured span of the sequence.
pub fn smooth_sequence(seq: &Sequence, cfg: &PipelineConfig) -> Result<SmoothedTrajectory> {
    let meas = seq.absolute_poses()?;
    if let Some((f, _)) = meas.iter().find(|(f, _)| *f >= seq.manifest.frame_count) {
        return Err(Error::InvalidInput(format!(
            "{}: absolute pose for frame {f} beyond the {}-frame sequence",
            seq.id(),
            seq.manifest.frame_count
        )));
    }
    let noise = cfg.noise.with_frame_rate(seq.manifest.frame_rate_hz);
    smooth(&meas, &noise)
}

/// RANSAC seed of one pair, derived from the run seed so pairs are independent of
/// evaluation order.
pub fn pair_seed(seed: u64, i: usize, j: usize) -> u64 {
    let mut z = seed ^ ((i as u64) << 32 | j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Registers every pair of the configured topology. Pairs without enough usable
/// correspondences are skipped with a warning.
pub fn relpose_sequence(seq: &Sequence, cfg: &PipelineConfig) -> Result<Vec<RelativePoseEstimate>> {
    let n = seq.manifest.frame_count;
    let k = seq.manifest.intrinsics;
    let tracks = seq.tracks()?;
    let frames: Vec<(DepthMap, Mask)> = (0..n)
        .into_par_iter()
        .map(|f| Ok((seq.depth(f)?, seq.mask(f)?)))
        .collect::<Result<_>>()?;
    let pairs = pair_topology(n, &cfg.relpose.strides);
    let results: Vec<Result<Option<RelativePoseEstimate>>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let view = |f: usize| FrameView {
                frame: f,
                depth: &frames[f].0,
                mask: &frames[f].1,
            };
            let corr = match backproject(&tracks, &view(i), &view(j), &k) {
                Ok(c) => c,
                Err(e @ Error::InsufficientCorrespondences { .. }) => {
                    warn!("{}: {e}", seq.id());
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let mut ransac = cfg.ransac;
            ransac.seed = pair_seed(cfg.ransac.seed, i, j);
            match register(&corr, &ransac) {
                Ok(mut est) => {
                    est.information = information_matrix(&est, &corr, cfg.relpose.sigma_point);
                    Ok(Some(est))
                }
                Err(e @ (Error::RegistrationFailure { .. } | Error::InsufficientCorrespondences { .. })) => {
                    warn!("{}: {e}", seq.id());
                    Ok(None)
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut out = Vec::with_capacity(pairs.len());
    for r in results {
        out.extend(r?);
    }
    info!("{}: registered {}/{} pairs", seq.id(), out.len(), pairs.len());
    Ok(out)
}

/// Frames inside the smoothed span that had no absolute measurement.
pub fn gap_mask(smoothed: &[(usize, Pose)], measured: &[(usize, Pose)]) -> Vec<bool> {
    let have: BTreeSet<usize> = measured.iter().map(|(f, _)| *f).collect();
    smoothed.iter().map(|(f, _)| !have.contains(f)).collect()
}

/// Pose-graph fusion of the smoothed poses with the relative edges whose frames lie in
/// the smoothed span.
pub fn optimize_sequence(
    smoothed: &SmoothedTrajectory,
    relatives: &[RelativePoseEstimate],
    overrides: &OverrideFile,
    cfg: &PipelineConfig,
) -> Result<OptimizationResult> {
    let span: BTreeSet<usize> = smoothed.frames.iter().map(|f| f.frame).collect();
    let usable: Vec<RelativePoseEstimate> = relatives
        .iter()
        .filter(|r| span.contains(&r.i) && span.contains(&r.j))
        .cloned()
        .collect();
    if usable.len() < relatives.len() {
        info!("{} relative edges outside the smoothed span dropped", relatives.len() - usable.len());
    }
    let graph = build_graph(smoothed, &usable, overrides, &cfg.weights)?;
    optimize(&graph, &cfg.optimizer)
}

fn out_path(seq: &Sequence, explicit: Option<&Path>, default: &str) -> PathBuf {
    explicit.map_or_else(|| seq.path(default), Path::to_path_buf)
}

/// `smooth` stage: absolute poses to the smoothed pose file.
pub fn run_smooth(dir: &Path, cfg: &PipelineConfig, out: Option<&Path>) -> Result<PathBuf> {
    let seq = open(dir)?;
    let traj = smooth_sequence(&seq, cfg)?;
    let path = out_path(&seq, out, &cfg.paths.smoothed);
    write_poses(&path, &traj.poses())?;
    Ok(path)
}

/// `relpose` stage: tracks and depth to the relative-pose file.
pub fn run_relpose(dir: &Path, cfg: &PipelineConfig, out: Option<&Path>) -> Result<PathBuf> {
    let seq = open(dir)?;
    let est = relpose_sequence(&seq, cfg)?;
    let path = out_path(&seq, out, &cfg.paths.relatives);
    write_relatives(&path, &est)?;
    Ok(path)
}

/// Reads the override file: an explicit path must exist; the default one may be absent.
pub fn load_overrides(seq: &Sequence, cfg: &PipelineConfig, explicit: Option<&Path>) -> Result<OverrideFile> {
    let file = match explicit {
        Some(p) => read_overrides(p)?,
        None => {
            let p = seq.path(&cfg.paths.overrides);
            if p.exists() {
                read_overrides(&p)?
            } else {
                OverrideFile::default()
            }
        }
    };
    file.validate(seq.manifest.frame_count)?;
    Ok(file)
}

/// `optimize` stage: smoothed and relative files (plus overrides) to the optimized pose file.
pub fn run_optimize(
    dir: &Path,
    cfg: &PipelineConfig,
    overrides: Option<&Path>,
    out: Option<&Path>,
) -> Result<(PathBuf, OptimizationResult)> {
    let seq = open(dir)?;
    let smoothed = read_poses(&seq.path(&cfg.paths.smoothed))?;
    let measured = seq.absolute_poses()?;
    let traj = SmoothedTrajectory::from_poses(&smoothed, gap_mask(&smoothed, &measured))?;
    let relatives = read_relatives(&seq.path(&cfg.paths.relatives))?;
    let ov = load_overrides(&seq, cfg, overrides)?;
    let result = optimize_sequence(&traj, &relatives, &ov, cfg)?;
    info!(
        "{}: cost {:.6e} -> {:.6e} in {} iterations ({:?})",
        seq.id(),
        result.initial_cost,
        result.final_cost,
        result.iterations.len(),
        result.termination
    );
    let path = out_path(&seq, out, &cfg.paths.optimized);
    write_poses(&path, &result.poses)?;
    Ok((path, result))
}

fn read_if_exists(path: &Path) -> Result<Option<Vec<(usize, Pose)>>> {
    if path.exists() {
        read_poses(path).map(Some)
    } else {
        Ok(None)
    }
}

/// Overlay bundle over the raw, smoothed, optimized and ground-truth trajectories that
/// exist for the sequence.
pub fn overlay_bundle(seq: &Sequence, cfg: &PipelineConfig) -> Result<OverlayBundle> {
    let extents = seq
        .manifest
        .extents
        .ok_or_else(|| Error::InvalidInput(format!("{}: manifest has no box extents", seq.id())))?;
    let raw = Some(seq.absolute_poses()?);
    let smoothed = read_if_exists(&seq.path(&cfg.paths.smoothed))?;
    let pgo = read_if_exists(&seq.path(&cfg.paths.optimized))?;
    let gt = seq.ground_truth()?;
    let variants = [("raw", &raw), ("smoothed", &smoothed), ("pgo", &pgo), ("gt", &gt)];
    let variants: Vec<(&str, Option<&[(usize, Pose)]>)> =
        variants.iter().map(|(n, t)| (*n, t.as_deref())).collect();
    export_overlays(
        seq.id(),
        seq.manifest.frame_count,
        &variants,
        &Vec3::from(extents),
        &seq.manifest.intrinsics,
    )
}

/// `export-overlays` stage.
pub fn run_export(dir: &Path, cfg: &PipelineConfig, out: Option<&Path>) -> Result<PathBuf> {
    let seq = open(dir)?;
    let bundle = overlay_bundle(&seq, cfg)?;
    let path = out_path(&seq, out, &cfg.paths.overlays);
    write_overlay_bundle(&path, &bundle)?;
    Ok(path)
}

/// Evaluates an estimate against a reference over their common frames.
pub fn evaluate_trajectories(
    estimate: &[(usize, Pose)],
    reference: &[(usize, Pose)],
    model: Option<&ModelPoints>,
    extents: Option<&Vec3>,
    opts: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let pair = TrajectoryPair::intersect(estimate, reference)?;
    if pair.len() < estimate.len().min(reference.len()) {
        warn!(
            "evaluating {} common frames of {} estimated and {} reference",
            pair.len(),
            estimate.len(),
            reference.len()
        );
    }
    evaluate(&pair, model, extents, opts)
}

/// Runs smooth, relpose and optimize on one sequence with the default file layout.
pub fn run_all(dir: &Path, cfg: &PipelineConfig) -> Result<OptimizationResult> {
    run_smooth(dir, cfg, None)?;
    run_relpose(dir, cfg, None)?;
    Ok(run_optimize(dir, cfg, None, None)?.1)
}
