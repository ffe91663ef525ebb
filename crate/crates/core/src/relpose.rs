//! Relative object poses from tracked points: back-projection, robust rigid
//! registration, and the registration information matrix.
//!
//! A relative estimate `M` for the pair `(i, j)` maps camera-frame points of frame `i`
//! onto frame `j`: `x_j = M x_i`, i.e. `M = T_j T_i⁻¹` for object poses `T`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::depth::{DepthMap, Mask};
use crate::dataio::tracks::TrackTable;
use crate::error::{Error, Result};
use crate::se3::{exp_se3, skew, Mat3, Mat6, Pose, Rotation, Twist, Vec3, Vec6};

pub const MIN_DEPTH_M: f64 = 0.1;
pub const MAX_DEPTH_M: f64 = 5.0;

/// Per-point residual scale used when none is configured. With unit scale the
/// translational information equals the inlier count, which for a few hundred tracked
/// points is of order 1e2.
/// Neighborhoods whose depths spread more than this fraction of the depth are treated
/// as occlusion boundaries and not lifted.
pub const DEPTH_EDGE_SPREAD: f64 = 0.03;
pub const DEFAULT_SIGMA_POINT: f64 = 1.0;

/// Minimum triangle doubled-area (m²) for a RANSAC sample to count as non-collinear.
const COLLINEAR_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx.is_finite() && self.fx > 0.0 && self.fy.is_finite() && self.fy > 0.0) {
            return Err(Error::InvalidInput("focal lengths must be positive".into()));
        }
        if !(self.cx >= 0.0
            && self.cy >= 0.0
            && self.cx <= self.width as f64
            && self.cy <= self.height as f64)
        {
            return Err(Error::InvalidInput("principal point outside the image".into()));
        }
        Ok(())
    }

    /// `depth · K⁻¹ (u, v, 1)`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        Vec3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Pinhole projection; `None` for points at or behind the camera plane.
    pub fn project(&self, p: &Vec3) -> Option<[f64; 2]> {
        (p.z > 0.0).then(|| [self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }
}

/// Paired camera-frame points of frames `i` (`source`) and `j` (`target`).
#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceSet {
    pub i: usize,
    pub j: usize,
    pub source: Vec<Vec3>,
    pub target: Vec<Vec3>,
    pub weights: Vec<f64>,
    /// Query point behind each pair.
    pub queries: Vec<usize>,
}

impl CorrespondenceSet {
    pub fn new(i: usize, j: usize, source: Vec<Vec3>, target: Vec<Vec3>) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::InvalidInput("correspondence lists differ in length".into()));
        }
        let n = source.len();
        Ok(CorrespondenceSet {
            i,
            j,
            source,
            target,
            weights: vec![1.0; n],
            queries: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.source.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source.is_empty()
    }
}

/// Inputs of one frame for back-projection.
pub struct FrameView<'a> {
    pub frame: usize,
    pub depth: &'a DepthMap,
    pub mask: &'a Mask,
}

fn lift(view: &FrameView<'_>, k: &CameraIntrinsics, u: f64, v: f64) -> Option<Vec3> {
    if !view.mask.contains(u, v) {
        return None;
    }
    let d = view.depth.bilinear(u, v, DEPTH_EDGE_SPREAD * view.depth.nearest(u, v)?)?;
    (d > MIN_DEPTH_M && d < MAX_DEPTH_M).then(|| k.backproject(u, v, d))
}

/// 3D–3D pairs from the tracks visible in both frames, inside both masks, with valid depth.
pub fn backproject(
    tracks: &TrackTable,
    a: &FrameView<'_>,
    b: &FrameView<'_>,
    k: &CameraIntrinsics,
) -> Result<CorrespondenceSet> {
    let mut corr = CorrespondenceSet {
        i: a.frame,
        j: b.frame,
        source: Vec::new(),
        target: Vec::new(),
        weights: Vec::new(),
        queries: Vec::new(),
    };
    for q in 0..tracks.queries() {
        let (Some(oa), Some(ob)) = (tracks.at(q, a.frame), tracks.at(q, b.frame)) else {
            continue;
        };
        if !(oa.visible && ob.visible) {
            continue;
        }
        if let (Some(xa), Some(xb)) = (lift(a, k, oa.u, oa.v), lift(b, k, ob.u, ob.v)) {
            corr.source.push(xa);
            corr.target.push(xb);
            corr.weights.push(1.0);
            corr.queries.push(q);
        }
    }
    if corr.len() < 3 {
        return Err(Error::InsufficientCorrespondences {
            i: a.frame,
            j: b.frame,
            found: corr.len(),
        });
    }
    Ok(corr)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iters: usize,
    pub inlier_threshold_m: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            iters: 500,
            inlier_threshold_m: 0.01,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidArgument("RANSAC needs at least one iteration".into()));
        }
        if !(self.inlier_threshold_m.is_finite() && self.inlier_threshold_m > 0.0) {
            return Err(Error::InvalidArgument("inlier threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelativePoseEstimate {
    pub i: usize,
    pub j: usize,
    /// `x_j = pose · x_i` in camera coordinates.
    pub pose: Pose,
    /// Indices into the correspondence set.
    pub inliers: Vec<usize>,
    /// Information of a left perturbation `exp(ξ) · pose`, ordering `[rho, phi]`.
    pub information: Mat6,
}

/// Closed-form weighted rigid fit `target ≈ T · source` (no scale).
pub fn kabsch(source: &[Vec3], target: &[Vec3], weights: &[f64]) -> Option<Pose> {
    let wsum: f64 = weights.iter().sum();
    if source.len() < 3 || !(wsum > 0.0) {
        return None;
    }
    let mut cs = Vec3::zeros();
    let mut ct = Vec3::zeros();
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        cs += s * *w;
        ct += t * *w;
    }
    cs /= wsum;
    ct /= wsum;
    let mut h = Mat3::zeros();
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        h += (s - cs) * (t - ct).transpose() * *w;
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose();
    let rotation = Rotation::from_matrix(&r);
    let translation = ct - rotation.rotate(&cs);
    Some(Pose::new(rotation, translation))
}

fn collinear(a: &Vec3, b: &Vec3, c: &Vec3) -> bool {
    (b - a).cross(&(c - a)).norm() < COLLINEAR_EPS
}

fn residual(pose: &Pose, corr: &CorrespondenceSet, k: usize) -> f64 {
    (pose.transform_point(&corr.source[k]) - corr.target[k]).norm()
}

fn inliers_of(pose: &Pose, corr: &CorrespondenceSet, threshold: f64) -> (Vec<usize>, f64) {
    let mut idx = Vec::new();
    let mut sum = 0.0;
    for k in 0..corr.len() {
        let r = residual(pose, corr, k);
        if r < threshold {
            idx.push(k);
            sum += r;
        }
    }
    (idx, sum)
}

fn fit_subset(corr: &CorrespondenceSet, idx: &[usize]) -> Option<Pose> {
    let s: Vec<Vec3> = idx.iter().map(|&k| corr.source[k]).collect();
    let t: Vec<Vec3> = idx.iter().map(|&k| corr.target[k]).collect();
    let w: Vec<f64> = idx.iter().map(|&k| corr.weights[k]).collect();
    kabsch(&s, &t, &w)
}

/// RANSAC over minimal samples, then refit on the inlier set until it stops changing.
pub fn register(corr: &CorrespondenceSet, ransac: &RansacConfig) -> Result<RelativePoseEstimate> {
    ransac.validate()?;
    let fail = |reason: String| Error::RegistrationFailure {
        i: corr.i,
        j: corr.j,
        reason,
    };
    let n = corr.len();
    if n < 3 {
        return Err(Error::InsufficientCorrespondences {
            i: corr.i,
            j: corr.j,
            found: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ransac.seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut drawn = 0;
    let mut attempts = 0;
    while drawn < ransac.iters && attempts < ransac.iters * 20 {
        attempts += 1;
        let pick = sample(&mut rng, n, 3).into_vec();
        let (a, b, c) = (pick[0], pick[1], pick[2]);
        if collinear(&corr.source[a], &corr.source[b], &corr.source[c])
            || collinear(&corr.target[a], &corr.target[b], &corr.target[c])
        {
            continue;
        }
        drawn += 1;
        let Some(model) = fit_subset(corr, &pick) else {
            continue;
        };
        let (idx, sum) = inliers_of(&model, corr, ransac.inlier_threshold_m);
        let better = match &best {
            None => true,
            Some((bi, bs)) => idx.len() > bi.len() || (idx.len() == bi.len() && sum < *bs),
        };
        if better {
            best = Some((idx, sum));
        }
    }
    let (mut inliers, _) = best.ok_or_else(|| fail("every sample was degenerate".into()))?;
    if inliers.len() < 3 {
        return Err(fail(format!("best model has {} inliers", inliers.len())));
    }
    let mut pose = fit_subset(corr, &inliers).ok_or_else(|| fail("inlier refit failed".into()))?;
    for _ in 0..10 {
        let (next, _) = inliers_of(&pose, corr, ransac.inlier_threshold_m);
        if next == inliers || next.len() < 3 {
            break;
        }
        inliers = next;
        pose = fit_subset(corr, &inliers).ok_or_else(|| fail("inlier refit failed".into()))?;
    }
    let mut est = RelativePoseEstimate {
        i: corr.i,
        j: corr.j,
        pose,
        inliers,
        information: Mat6::zeros(),
    };
    est.information = information_matrix(&est, corr, DEFAULT_SIGMA_POINT);
    Ok(est)
}

/// Jacobian of `exp(ξ) T x − y` with respect to `ξ = [rho, phi]` at `ξ = 0`.
pub fn point_jacobian(tx: &Vec3) -> nalgebra::Matrix3x6<f64> {
    let mut j = nalgebra::Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Mat3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-skew(tx)));
    j
}

/// `Σ w Jᵀ J / σ²` over the inliers, symmetrized and floored to PSD.
pub fn information_matrix(est: &RelativePoseEstimate, corr: &CorrespondenceSet, sigma_point: f64) -> Mat6 {
    let mut omega = Mat6::zeros();
    for &k in &est.inliers {
        let j = point_jacobian(&est.pose.transform_point(&corr.source[k]));
        omega += j.transpose() * j * corr.weights[k];
    }
    omega /= sigma_point * sigma_point;
    floor_psd(&omega)
}

/// Symmetrizes and clamps negative eigenvalues to zero.
pub fn floor_psd(m: &Mat6) -> Mat6 {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return sym;
    }
    let floored = eig.eigenvalues.map(|l| l.max(0.0));
    let r = &eig.eigenvectors * Mat6::from_diagonal(&floored) * eig.eigenvectors.transpose();
    (r + r.transpose()) * 0.5
}

/// Gauss-Newton on `Σ w |exp(ξ) T x − y|²` over the given pairs, from `init`.
pub fn refine_gauss_newton(
    corr: &CorrespondenceSet,
    indices: &[usize],
    init: &Pose,
    max_iters: usize,
) -> Pose {
    let mut pose = *init;
    for _ in 0..max_iters {
        let mut h = Mat6::zeros();
        let mut g = Vec6::zeros();
        for &k in indices {
            let tx = pose.transform_point(&corr.source[k]);
            let r = tx - corr.target[k];
            let j = point_jacobian(&tx);
            h += j.transpose() * j * corr.weights[k];
            g += j.transpose() * r * corr.weights[k];
        }
        let Some(chol) = h.cholesky() else {
            break;
        };
        let delta = -chol.solve(&g);
        let Ok(step) = exp_se3(&Twist::from_vector(&delta)) else {
            break;
        };
        pose = step.compose(&pose);
        if delta.norm() < 1e-15 {
            break;
        }
    }
    pose
}

/// Chains consecutive relatives `(k, k + 1)` from the anchor frame: `T_{k+1} = M T_k`.
/// Pairs of other strides are ignored.
pub fn chain_relative(
    anchor_frame: usize,
    anchor: &Pose,
    estimates: &[RelativePoseEstimate],
) -> Result<Vec<(usize, Pose)>> {
    let step: std::collections::BTreeMap<usize, &Pose> = estimates
        .iter()
        .filter(|e| e.j == e.i + 1 && e.i >= anchor_frame)
        .map(|e| (e.i, &e.pose))
        .collect();
    let last = estimates
        .iter()
        .filter(|e| e.i >= anchor_frame)
        .map(|e| e.j)
        .max()
        .unwrap_or(anchor_frame);
    let missing: Vec<usize> = (anchor_frame..last)
        .filter(|k| !step.contains_key(k))
        .map(|k| k + 1)
        .collect();
    if !missing.is_empty() {
        return Err(Error::Gap(missing));
    }
    let mut out = Vec::with_capacity(last - anchor_frame + 1);
    let mut current = *anchor;
    out.push((anchor_frame, current));
    for k in anchor_frame..last {
        current = step[&k].compose(&current);
        out.push((k + 1, current));
    }
    Ok(out)
}

/// All pairs `(f, f + s)` for the given strides over `0..frames`, sorted.
pub fn pair_topology(frames: usize, strides: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(usize, usize)> = strides
        .iter()
        .filter(|&&s| s > 0)
        .flat_map(|&s| (0..frames.saturating_sub(s)).map(move |f| (f, f + s)))
        .collect();
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}
