//! Trajectory and pose-accuracy metrics: ATE, RPE, ADD / ADD-S with AUC and
//! 0.1-diameter recall, oriented-box 3D IoU recalls, and rotation/translation recalls.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relpose::kabsch;
use crate::se3::{Pose, Vec3};

pub mod iou;
pub mod nn;

pub use crate::dataio::model::ModelPoints;
pub use iou::{oriented_box_corners, oriented_box_iou};

/// Upper end of the ADD / ADD-S AUC threshold range, meters.
pub const AUC_MAX_THRESHOLD_M: f64 = 0.1;
pub const IOU_THRESHOLDS: [f64; 3] = [0.25, 0.5, 0.75];
pub const DEFAULT_POSE_THRESHOLDS: [(f64, f64); 4] = [(5.0, 2.0), (5.0, 5.0), (10.0, 2.0), (10.0, 5.0)];

/// Estimate and reference sampled at identical frames.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryPair {
    frames: Vec<usize>,
    estimate: Vec<Pose>,
    reference: Vec<Pose>,
}

impl TrajectoryPair {
    pub fn new(estimate: &[(usize, Pose)], reference: &[(usize, Pose)]) -> Result<Self> {
        if estimate.len() != reference.len() {
            return Err(Error::InvalidInput(format!(
                "trajectories differ in length: {} vs {}",
                estimate.len(),
                reference.len()
            )));
        }
        if estimate.len() < 2 {
            return Err(Error::InvalidInput("need at least 2 frames".into()));
        }
        if let Some(((a, _), (b, _))) = estimate.iter().zip(reference).find(|((a, _), (b, _))| a != b) {
            return Err(Error::InvalidInput(format!("frame mismatch: {a} vs {b}")));
        }
        Ok(TrajectoryPair {
            frames: estimate.iter().map(|(f, _)| *f).collect(),
            estimate: estimate.iter().map(|(_, p)| *p).collect(),
            reference: reference.iter().map(|(_, p)| *p).collect(),
        })
    }

    /// Pairs up the frames both trajectories contain.
    pub fn intersect(estimate: &[(usize, Pose)], reference: &[(usize, Pose)]) -> Result<Self> {
        let refs: std::collections::BTreeMap<usize, Pose> = reference.iter().copied().collect();
        let (est, rf): (Vec<_>, Vec<_>) = estimate
            .iter()
            .filter_map(|(f, p)| refs.get(f).map(|r| ((*f, *p), (*f, *r))))
            .unzip();
        Self::new(&est, &rf)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frames(&self) -> &[usize] {
        &self.frames
    }

    pub fn estimate(&self) -> &[Pose] {
        &self.estimate
    }

    pub fn reference(&self) -> &[Pose] {
        &self.reference
    }

    /// The pair with the estimate moved by the rigid motion that best aligns its
    /// positions to the reference positions.
    pub fn aligned(&self) -> Result<Self> {
        let src: Vec<Vec3> = self.estimate.iter().map(|p| p.translation).collect();
        let dst: Vec<Vec3> = self.reference.iter().map(|p| p.translation).collect();
        let g = kabsch(&src, &dst, &vec![1.0; src.len()])
            .ok_or_else(|| Error::InvalidInput("alignment needs at least 3 positions".into()))?;
        Ok(TrajectoryPair {
            estimate: self.estimate.iter().map(|p| g.compose(p)).collect(),
            ..self.clone()
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub median: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Stats::default();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        Stats {
            mean: values.iter().sum::<f64>() / n as f64,
            median,
            max: sorted[n - 1],
        }
    }
}

/// Per-frame translation errors, millimetres.
pub fn ate_errors(pair: &TrajectoryPair) -> Vec<f64> {
    pair.estimate
        .iter()
        .zip(&pair.reference)
        .map(|(e, r)| (e.translation - r.translation).norm() * 1000.0)
        .collect()
}

/// Absolute trajectory error, millimetres.
pub fn ate(pair: &TrajectoryPair) -> Stats {
    Stats::of(&ate_errors(pair))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RpeResult {
    pub delta: usize,
    pub rot_deg: Stats,
    pub trans_mm: Stats,
    /// Per step `(rotation degrees, translation millimetres)`.
    pub steps: Vec<(f64, f64)>,
}

/// Relative pose error over steps of `delta` frames (by position in the pair).
pub fn rpe(pair: &TrajectoryPair, delta: usize) -> Result<RpeResult> {
    if delta == 0 || delta >= pair.len() {
        return Err(Error::InvalidInput(format!(
            "RPE delta {delta} must be in 1..{}",
            pair.len()
        )));
    }
    let steps: Vec<(f64, f64)> = (0..pair.len() - delta)
        .map(|i| {
            let rel_ref = pair.reference[i].between(&pair.reference[i + delta]);
            let rel_est = pair.estimate[i].between(&pair.estimate[i + delta]);
            let e = rel_ref.inverse().compose(&rel_est);
            (e.rotation.angle().to_degrees(), e.translation.norm() * 1000.0)
        })
        .collect();
    let rot: Vec<f64> = steps.iter().map(|s| s.0).collect();
    let trans: Vec<f64> = steps.iter().map(|s| s.1).collect();
    Ok(RpeResult {
        delta,
        rot_deg: Stats::of(&rot),
        trans_mm: Stats::of(&trans),
        steps,
    })
}

/// ADD per frame, meters.
pub fn add_errors(pair: &TrajectoryPair, model: &ModelPoints) -> Vec<f64> {
    let pts = model.points();
    pair.estimate
        .par_iter()
        .zip(&pair.reference)
        .map(|(e, r)| {
            pts.iter()
                .map(|x| (e.transform_point(x) - r.transform_point(x)).norm())
                .sum::<f64>()
                / pts.len() as f64
        })
        .collect()
}

/// ADD-S per frame, meters: mean distance from each estimated model point to the
/// nearest reference model point.
pub fn adds_errors(pair: &TrajectoryPair, model: &ModelPoints) -> Vec<f64> {
    let index = nn::NearestNeighbors::new(model.points());
    let pts = model.points();
    pair.estimate
        .par_iter()
        .zip(&pair.reference)
        .map(|(e, r)| {
            let d = r.inverse().compose(e);
            pts.iter().map(|x| index.nearest(&d.transform_point(x)).1).sum::<f64>() / pts.len() as f64
        })
        .collect()
}

/// Area under the recall-vs-threshold curve on `(0, max]`, percent. The recall curve is
/// a step function, integrated exactly.
pub fn auc(errors: &[f64], max_threshold: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let area: f64 = errors
        .iter()
        .map(|&d| (1.0 - d.max(0.0) / max_threshold).max(0.0))
        .sum();
    100.0 * area / errors.len() as f64
}

/// Trapezoidal integration of the sampled recall curve (`error < t`) at `step`, percent.
pub fn auc_trapezoid(errors: &[f64], max_threshold: f64, step: f64) -> f64 {
    let n = (max_threshold / step).round() as usize;
    let recall = |t: f64| errors.iter().filter(|&&d| d < t).count() as f64 / errors.len() as f64;
    let samples: Vec<f64> = (0..=n).map(|k| recall(k as f64 * step)).collect();
    let area: f64 = samples.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
    100.0 * area / (n as f64 * step)
}

/// Percentage of values strictly below `threshold`.
pub fn recall_below(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    100.0 * values.iter().filter(|&&v| v < threshold).count() as f64 / values.len() as f64
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AddMetrics {
    pub add_auc: f64,
    pub adds_auc: f64,
    pub add_01d: f64,
    pub adds_01d: f64,
    /// Per-frame ADD and ADD-S, meters.
    pub add: Vec<f64>,
    pub adds: Vec<f64>,
}

pub fn add_metrics(pair: &TrajectoryPair, model: &ModelPoints) -> AddMetrics {
    let add = add_errors(pair, model);
    let adds = adds_errors(pair, model);
    let d01 = 0.1 * model.diameter();
    AddMetrics {
        add_auc: auc(&add, AUC_MAX_THRESHOLD_M),
        adds_auc: auc(&adds, AUC_MAX_THRESHOLD_M),
        add_01d: recall_below(&add, d01),
        adds_01d: recall_below(&adds, d01),
        add,
        adds,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IouResult {
    /// Per-frame IoU.
    pub iou: Vec<f64>,
    /// `(threshold, percent of frames with IoU above it)`.
    pub recalls: Vec<(f64, f64)>,
}

/// Oriented-box IoU per frame. `extents` holds one box size for all frames or one per frame.
pub fn iou3d(pair: &TrajectoryPair, extents: &[Vec3]) -> Result<IouResult> {
    if extents.len() != 1 && extents.len() != pair.len() {
        return Err(Error::InvalidInput(format!(
            "need 1 or {} extents, got {}",
            pair.len(),
            extents.len()
        )));
    }
    let iou = (0..pair.len())
        .map(|k| {
            let ext = extents[if extents.len() == 1 { 0 } else { k }];
            oriented_box_iou(&pair.estimate[k], &ext, &pair.reference[k], &ext)
        })
        .collect::<Result<Vec<f64>>>()?;
    let recalls = IOU_THRESHOLDS
        .iter()
        .map(|&t| (t, 100.0 * iou.iter().filter(|&&v| v > t).count() as f64 / iou.len() as f64))
        .collect();
    Ok(IouResult { iou, recalls })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecall {
    pub deg: f64,
    pub cm: f64,
    pub recall: f64,
}

/// Percentage of frames with rotation error below `deg` and translation error below `cm`.
pub fn pose_recalls(pair: &TrajectoryPair, thresholds: &[(f64, f64)]) -> Result<Vec<PoseRecall>> {
    if thresholds.is_empty() {
        return Err(Error::InvalidInput("no recall thresholds".into()));
    }
    let errs: Vec<(f64, f64)> = pair
        .estimate
        .iter()
        .zip(&pair.reference)
        .map(|(e, r)| {
            let (rot, trans) = e.distance(r);
            (rot.to_degrees(), trans * 100.0)
        })
        .collect();
    Ok(thresholds
        .iter()
        .map(|&(deg, cm)| PoseRecall {
            deg,
            cm,
            recall: 100.0 * errs.iter().filter(|(r, t)| *r < deg && *t < cm).count() as f64 / errs.len() as f64,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationOptions {
    pub align: bool,
    pub rpe_delta: usize,
    pub pose_thresholds: Vec<(f64, f64)>,
}

impl Default for EvaluationOptions {
    fn default() -> Self {
        EvaluationOptions {
            align: false,
            rpe_delta: 1,
            pose_thresholds: DEFAULT_POSE_THRESHOLDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AddSummary {
    pub add_auc: f64,
    pub adds_auc: f64,
    pub add_01d: f64,
    pub adds_01d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub frames: usize,
    pub aligned: bool,
    /// Millimetres.
    pub ate: Stats,
    pub rpe_delta: usize,
    /// Degrees.
    pub rpe_rot: Stats,
    /// Millimetres.
    pub rpe_trans: Stats,
    /// Percent.
    pub add: Option<AddSummary>,
    /// `(IoU threshold, percent)`.
    pub iou_recalls: Option<Vec<(f64, f64)>>,
    pub pose_recalls: Vec<PoseRecall>,
}

pub fn evaluate(
    pair: &TrajectoryPair,
    model: Option<&ModelPoints>,
    extents: Option<&Vec3>,
    opts: &EvaluationOptions,
) -> Result<EvaluationReport> {
    let aligned;
    let pair = if opts.align {
        aligned = pair.aligned()?;
        &aligned
    } else {
        pair
    };
    let r = rpe(pair, opts.rpe_delta)?;
    let add = model.map(|m| {
        let a = add_metrics(pair, m);
        AddSummary {
            add_auc: a.add_auc,
            adds_auc: a.adds_auc,
            add_01d: a.add_01d,
            adds_01d: a.adds_01d,
        }
    });
    let iou_recalls = extents
        .map(|e| iou3d(pair, std::slice::from_ref(e)).map(|r| r.recalls))
        .transpose()?;
    Ok(EvaluationReport {
        frames: pair.len(),
        aligned: opts.align,
        ate: ate(pair),
        rpe_delta: r.delta,
        rpe_rot: r.rot_deg,
        rpe_trans: r.trans_mm,
        add,
        iou_recalls,
        pose_recalls: pose_recalls(pair, &opts.pose_thresholds)?,
    })
}

impl EvaluationReport {
    /// True when every error is at most `tol` and every recall is within `tol` of 100%.
    pub fn is_perfect(&self, tol: f64) -> bool {
        self.max_error() <= tol && self.min_recall() >= 100.0 - tol
    }

    /// Largest error statistic (mm or degrees).
    pub fn max_error(&self) -> f64 {
        [self.ate.max, self.rpe_rot.max, self.rpe_trans.max]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Smallest recall or AUC, percent.
    pub fn min_recall(&self) -> f64 {
        let mut all: Vec<f64> = self.pose_recalls.iter().map(|p| p.recall).collect();
        if let Some(a) = &self.add {
            all.extend([a.add_auc, a.adds_auc, a.add_01d, a.adds_01d]);
        }
        if let Some(i) = &self.iou_recalls {
            all.extend(i.iter().map(|(_, r)| *r));
        }
        all.into_iter().fold(100.0, f64::min)
    }
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames: {}{}", self.frames, if self.aligned { " (SE(3)-aligned)" } else { "" })?;
        writeln!(f, "{:<18} {:>10} {:>10} {:>10}", "metric", "mean", "median", "max")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &Stats| {
            writeln!(f, "{:<18} {:>10.4} {:>10.4} {:>10.4}", name, s.mean, s.median, s.max)
        };
        row(f, "ATE (mm)", &self.ate)?;
        row(f, &format!("RPE@{} rot (deg)", self.rpe_delta), &self.rpe_rot)?;
        row(f, &format!("RPE@{} trans (mm)", self.rpe_delta), &self.rpe_trans)?;
        if let Some(a) = &self.add {
            writeln!(f, "ADD AUC {:.2}%  ADD-S AUC {:.2}%", a.add_auc, a.adds_auc)?;
            writeln!(f, "ADD-0.1d {:.2}%  ADD-S-0.1d {:.2}%", a.add_01d, a.adds_01d)?;
        }
        if let Some(iou) = &self.iou_recalls {
            let parts: Vec<String> = iou.iter().map(|(t, r)| format!("IoU{:.0} {:.2}%", t * 100.0, r)).collect();
            writeln!(f, "{}", parts.join("  "))?;
        }
        let parts: Vec<String> = self
            .pose_recalls
            .iter()
            .map(|p| format!("{}°{}cm {:.2}%", p.deg, p.cm, p.recall))
            .collect();
        writeln!(f, "{}", parts.join("  "))
    }
}
