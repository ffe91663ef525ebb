//! SE(3) pose graph over object poses with absolute and relative edges, solved by
//! Levenberg-Marquardt on the product manifold.
//!
//! Residuals, Jacobians and the retraction all use right perturbations `T exp(δ)`:
//! absolute `r = log(z⁻¹ T_i)`, relative `r = log(z⁻¹ T_i⁻¹ T_j)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::overrides::{OverrideFile, Tier};
use crate::error::{Error, Result};
use crate::relpose::RelativePoseEstimate;
use crate::se3::{se3_right_jacobian_inverse, Mat6, Pose, Twist, Vec6};
use crate::smoother::SmoothedTrajectory;

pub mod banded;

use banded::BandedMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightConfig {
    /// Isotropic information of trusted absolute edges.
    pub default_weight: f64,
    /// Isotropic information of absolute edges marked unreliable.
    pub downweighted_weight: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig {
            default_weight: 1e5,
            downweighted_weight: 5e2,
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("default_weight", self.default_weight),
            ("downweighted_weight", self.downweighted_weight),
        ] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, tier: Tier, scalar: Option<f64>) -> f64 {
        match tier {
            Tier::Removed => 0.0,
            Tier::Default => scalar.unwrap_or(self.default_weight),
            Tier::Downweighted => scalar.unwrap_or(self.downweighted_weight),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphNode {
    pub frame: usize,
    pub pose: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AbsoluteEdge {
    pub frame: usize,
    pub measurement: Pose,
    pub information: Mat6,
    pub tier: Tier,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeEdge {
    pub i: usize,
    pub j: usize,
    /// `z ≈ T_i⁻¹ T_j`.
    pub measurement: Pose,
    pub information: Mat6,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoseGraph {
    /// Sorted by frame.
    pub nodes: Vec<GraphNode>,
    pub absolute: Vec<AbsoluteEdge>,
    pub relative: Vec<RelativeEdge>,
}

pub fn residual_absolute(node: &Pose, z: &Pose) -> Twist {
    z.inverse().compose(node).log()
}

pub fn residual_relative(node_i: &Pose, node_j: &Pose, z: &Pose) -> Twist {
    z.inverse().compose(&node_i.inverse()).compose(node_j).log()
}

/// Jacobian of [`residual_absolute`] w.r.t. a right perturbation of the node.
pub fn jacobian_absolute(node: &Pose, z: &Pose) -> Mat6 {
    se3_right_jacobian_inverse(&residual_absolute(node, z))
}

/// Jacobians of [`residual_relative`] w.r.t. right perturbations of `T_i` and `T_j`.
pub fn jacobians_relative(node_i: &Pose, node_j: &Pose, z: &Pose) -> (Mat6, Mat6) {
    let jr_inv = se3_right_jacobian_inverse(&residual_relative(node_i, node_j, z));
    let ad = node_j.inverse().compose(node_i).adjoint();
    (-jr_inv * ad, jr_inv)
}

/// Expresses a camera-frame registration `M ≈ T_j T_i⁻¹` as the object-frame relative
/// `z = T_i⁻¹ M T_i` about the node estimate `T_i`, carrying its information from a
/// left perturbation of `M` to a right perturbation of `z`.
pub fn relative_edge_from_estimate(est: &RelativePoseEstimate, node_i: &Pose) -> RelativeEdge {
    let z = node_i.inverse().compose(&est.pose).compose(node_i);
    let ad = est.pose.compose(node_i).adjoint();
    let info = ad.transpose() * est.information * ad;
    RelativeEdge {
        i: est.i,
        j: est.j,
        measurement: z,
        information: (info + info.transpose()) * 0.5,
    }
}

impl PoseGraph {
    pub fn node_index(&self, frame: usize) -> Option<usize> {
        self.nodes.binary_search_by_key(&frame, |n| n.frame).ok()
    }

    pub fn poses(&self) -> Vec<(usize, Pose)> {
        self.nodes.iter().map(|n| (n.frame, n.pose)).collect()
    }

    /// Checks ordering, edge endpoints and information matrices.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidInput("pose graph has no nodes".into()));
        }
        if self.nodes.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(Error::InvalidInput("graph nodes must have increasing frames".into()));
        }
        let check_info = |m: &Mat6, what: String| -> Result<()> {
            if !m.iter().all(|v| v.is_finite()) || (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0) {
                return Err(Error::InvalidInput(format!("{what}: information not symmetric")));
            }
            if m.symmetric_eigen().eigenvalues.min() < -1e-9 * m.amax().max(1.0) {
                return Err(Error::InvalidInput(format!("{what}: information not PSD")));
            }
            Ok(())
        };
        for e in &self.absolute {
            self.node_index(e.frame)
                .ok_or_else(|| Error::InvalidInput(format!("absolute edge at unknown frame {}", e.frame)))?;
            check_info(&e.information, format!("absolute edge {}", e.frame))?;
        }
        for e in &self.relative {
            if e.i == e.j {
                return Err(Error::InvalidInput(format!("relative edge ({}, {}) is a self loop", e.i, e.j)));
            }
            for f in [e.i, e.j] {
                self.node_index(f).ok_or_else(|| {
                    Error::InvalidInput(format!("relative edge ({}, {}) references unknown frame {f}", e.i, e.j))
                })?;
            }
            check_info(&e.information, format!("relative edge ({}, {})", e.i, e.j))?;
        }
        Ok(())
    }

    /// Every connected component needs an absolute edge with non-zero information.
    pub fn check_anchored(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &self.relative {
            if e.information.amax() == 0.0 {
                continue;
            }
            let (a, b) = (self.node_index(e.i).unwrap(), self.node_index(e.j).unwrap());
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            parent[ra.max(rb)] = ra.min(rb);
        }
        let mut anchored = vec![false; n];
        for e in &self.absolute {
            if e.tier != Tier::Removed && e.information.amax() > 0.0 {
                let r = find(&mut parent, self.node_index(e.frame).unwrap());
                anchored[r] = true;
            }
        }
        let mut members: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for k in 0..n {
            let r = find(&mut parent, k);
            let f = self.nodes[k].frame;
            let entry = members.entry(r).or_insert((f, f));
            entry.0 = entry.0.min(f);
            entry.1 = entry.1.max(f);
        }
        match members.iter().find(|(r, _)| !anchored[**r]) {
            Some((_, &(first, last))) => Err(Error::UnanchoredGraph { first, last }),
            None => Ok(()),
        }
    }

    /// Sum of `rᵀ Ω r` over both edge families at `poses` (node order).
    pub fn cost(&self, poses: &[Pose]) -> f64 {
        self.cost_with(poses, &RobustKernel::None)
    }

    fn cost_with(&self, poses: &[Pose], kernel: &RobustKernel) -> f64 {
        let mut total = 0.0;
        for e in self.active_absolute() {
            let r = residual_absolute(&poses[self.node_index(e.frame).unwrap()], &e.measurement).to_vector();
            total += kernel.rho((r.transpose() * e.information * r)[0]);
        }
        for e in &self.relative {
            let (a, b) = (self.node_index(e.i).unwrap(), self.node_index(e.j).unwrap());
            let r = residual_relative(&poses[a], &poses[b], &e.measurement).to_vector();
            total += kernel.rho((r.transpose() * e.information * r)[0]);
        }
        total
    }

    fn active_absolute(&self) -> impl Iterator<Item = &AbsoluteEdge> {
        self.absolute.iter().filter(|e| e.tier != Tier::Removed)
    }

    /// Largest node-index distance spanned by a relative edge.
    fn node_bandwidth(&self) -> usize {
        self.relative
            .iter()
            .map(|e| self.node_index(e.i).unwrap().abs_diff(self.node_index(e.j).unwrap()))
            .max()
            .unwrap_or(0)
    }
}

/// Builds the graph: one node and one absolute edge per smoothed frame (frames the
/// smoother bridged without a measurement get a removed edge), relative edges from the
/// registrations, and override tiers applied to absolute edges.
pub fn build_graph(
    smoothed: &SmoothedTrajectory,
    relatives: &[RelativePoseEstimate],
    overrides: &OverrideFile,
    weights: &WeightConfig,
) -> Result<PoseGraph> {
    weights.validate()?;
    let frames: Vec<usize> = smoothed.frames.iter().map(|f| f.frame).collect();
    if frames.is_empty() {
        return Err(Error::InsufficientData("no smoothed frames".into()));
    }
    if let Some(last) = frames.last() {
        overrides.validate(last + 1)?;
    }
    let index: BTreeMap<usize, usize> = frames.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    for r in relatives {
        if !index.contains_key(&r.i) || !index.contains_key(&r.j) {
            return Err(Error::InvalidInput(format!(
                "relative pair ({}, {}) outside the smoothed frames",
                r.i, r.j
            )));
        }
    }

    let absolute: Vec<AbsoluteEdge> = smoothed
        .frames
        .iter()
        .zip(&smoothed.gap_mask)
        .map(|(f, &gap)| {
            let (tier, scalar) = if gap { (Tier::Removed, None) } else { overrides.resolve(f.frame) };
            AbsoluteEdge {
                frame: f.frame,
                measurement: f.pose,
                information: Mat6::identity() * weights.weight(tier, scalar),
                tier,
            }
        })
        .collect();

    // removed spans start from the chained relatives where a consecutive chain exists
    let consecutive: BTreeMap<usize, &RelativePoseEstimate> = relatives
        .iter()
        .filter(|r| index[&r.j] == index[&r.i] + 1)
        .map(|r| (index[&r.i], r))
        .collect();
    let mut init: Vec<Pose> = smoothed.frames.iter().map(|f| f.pose).collect();
    for k in 1..init.len() {
        if absolute[k].tier == Tier::Removed {
            if let Some(r) = consecutive.get(&(k - 1)) {
                init[k] = r.pose.compose(&init[k - 1]);
            }
        }
    }

    let nodes: Vec<GraphNode> = frames
        .iter()
        .zip(&init)
        .map(|(&frame, &pose)| GraphNode { frame, pose })
        .collect();
    let relative = relatives
        .iter()
        .map(|r| relative_edge_from_estimate(r, &init[index[&r.i]]))
        .collect();
    let graph = PoseGraph {
        nodes,
        absolute,
        relative,
    };
    graph.validate()?;
    graph.check_anchored()?;
    Ok(graph)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RobustKernel {
    #[default]
    None,
    /// Huber on the whitened residual norm `sqrt(rᵀ Ω r)`.
    Huber { delta: f64 },
}

impl RobustKernel {
    /// Kernel applied to the squared whitened norm.
    pub fn rho(&self, e2: f64) -> f64 {
        match *self {
            RobustKernel::None => e2,
            RobustKernel::Huber { delta } => {
                let e = e2.sqrt();
                if e <= delta {
                    e2
                } else {
                    2.0 * delta * e - delta * delta
                }
            }
        }
    }

    /// IRLS weight `ρ'(e²)`.
    pub fn weight(&self, e2: f64) -> f64 {
        match *self {
            RobustKernel::None => 1.0,
            RobustKernel::Huber { delta } => {
                let e = e2.sqrt();
                if e <= delta {
                    1.0
                } else {
                    delta / e
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerOptions {
    pub max_iters: usize,
    pub lambda_init: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Gradient infinity-norm threshold.
    pub abs_tol: f64,
    /// Relative cost-decrease threshold.
    pub rel_tol: f64,
    pub robust_kernel: RobustKernel,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            max_iters: 100,
            lambda_init: 1e-4,
            lambda_min: 1e-12,
            lambda_max: 1e10,
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            robust_kernel: RobustKernel::None,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lambda_init, self.lambda_min, self.lambda_max, self.abs_tol, self.rel_tol];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidArgument("optimizer tolerances and damping must be positive".into()));
        }
        if !(self.lambda_min <= self.lambda_init && self.lambda_init <= self.lambda_max) {
            return Err(Error::InvalidArgument("lambda_init outside [lambda_min, lambda_max]".into()));
        }
        if let RobustKernel::Huber { delta } = self.robust_kernel {
            if !(delta.is_finite() && delta > 0.0) {
                return Err(Error::InvalidArgument("Huber delta must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Cost at the start of the iteration.
    pub cost: f64,
    pub candidate_cost: f64,
    pub lambda: f64,
    pub gradient_norm: f64,
    pub step_norm: f64,
    pub accepted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    Gradient,
    CostDecrease,
    MaxIterations,
    DampingLimit,
}

#[derive(Clone, Debug)]
pub struct OptimizationResult {
    /// Optimized poses in node order.
    pub poses: Vec<(usize, Pose)>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
}

struct NormalEquations {
    h: BandedMatrix,
    g: Vec<f64>,
}

fn accumulate_block(h: &mut BandedMatrix, a: usize, b: usize, block: &Mat6) {
    // lower triangle only: block row a >= block column b
    for r in 0..6 {
        for c in 0..6 {
            let (gr, gc) = (6 * a + r, 6 * b + c);
            if gr >= gc {
                h.add(gr, gc, block[(r, c)]);
            }
        }
    }
}

fn linearize(graph: &PoseGraph, poses: &[Pose], kernel: &RobustKernel, bandwidth: usize) -> NormalEquations {
    let n = poses.len();
    let mut h = BandedMatrix::zeros(6 * n, bandwidth);
    let mut g = vec![0.0; 6 * n];
    for e in graph.active_absolute() {
        let k = graph.node_index(e.frame).unwrap();
        let r = residual_absolute(&poses[k], &e.measurement).to_vector();
        let w = kernel.weight((r.transpose() * e.information * r)[0]);
        let j = se3_right_jacobian_inverse(&Twist::from_vector(&r));
        let jt_omega = j.transpose() * e.information * w;
        accumulate_block(&mut h, k, k, &(jt_omega * j));
        let gk = jt_omega * r;
        for d in 0..6 {
            g[6 * k + d] += gk[d];
        }
    }
    for e in &graph.relative {
        let (a, b) = (graph.node_index(e.i).unwrap(), graph.node_index(e.j).unwrap());
        let r = residual_relative(&poses[a], &poses[b], &e.measurement).to_vector();
        let w = kernel.weight((r.transpose() * e.information * r)[0]);
        let (ja, jb) = jacobians_relative(&poses[a], &poses[b], &e.measurement);
        let omega = e.information * w;
        let (ta, tb) = (ja.transpose() * omega, jb.transpose() * omega);
        accumulate_block(&mut h, a, a, &(ta * ja));
        accumulate_block(&mut h, b, b, &(tb * jb));
        if a > b {
            accumulate_block(&mut h, a, b, &(ta * jb));
        } else {
            accumulate_block(&mut h, b, a, &(tb * ja));
        }
        let (ga, gb) = (ta * r, tb * r);
        for d in 0..6 {
            g[6 * a + d] += ga[d];
            g[6 * b + d] += gb[d];
        }
    }
    NormalEquations { h, g }
}

/// Levenberg-Marquardt with Marquardt diagonal scaling on the banded normal equations.
pub fn optimize(graph: &PoseGraph, opts: &OptimizerOptions) -> Result<OptimizationResult> {
    opts.validate()?;
    graph.validate()?;
    graph.check_anchored()?;
    let kernel = opts.robust_kernel;
    let bandwidth = 6 * graph.node_bandwidth() + 5;
    let mut poses: Vec<Pose> = graph.nodes.iter().map(|n| n.pose).collect();
    let mut cost = graph.cost_with(&poses, &kernel);
    let initial_cost = cost;
    let mut lambda = opts.lambda_init;
    let mut log = Vec::new();
    let mut termination = Termination::MaxIterations;
    let failure = |iterations: usize, reason: String, last: &[Pose]| Error::OptimizationFailure {
        iterations,
        reason,
        last: last.to_vec(),
    };

    'outer: for iteration in 0..opts.max_iters {
        let NormalEquations { h, g } = linearize(graph, &poses, &kernel, bandwidth);
        let gradient_norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !gradient_norm.is_finite() {
            return Err(failure(iteration, "non-finite gradient".into(), &poses));
        }
        if gradient_norm < opts.abs_tol {
            termination = Termination::Gradient;
            break;
        }
        let diag_floor = 1e-12 * (0..h.dim()).map(|k| h.get(k, k)).fold(0.0f64, f64::max).max(1e-300);
        loop {
            let mut damped = h.clone();
            for k in 0..damped.dim() {
                let d = damped.get(k, k).max(diag_floor);
                damped.add(k, k, lambda * d);
            }
            let step = match damped.cholesky() {
                Some(factor) => {
                    let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                    factor.solve(&rhs)
                }
                None => {
                    if lambda >= opts.lambda_max {
                        return Err(failure(
                            iteration,
                            "normal equations not positive definite at maximum damping".into(),
                            &poses,
                        ));
                    }
                    lambda = (lambda * 10.0).min(opts.lambda_max);
                    continue;
                }
            };
            let candidate: Vec<Pose> = poses
                .iter()
                .enumerate()
                .map(|(k, p)| p.retract(&Vec6::from_column_slice(&step[6 * k..6 * k + 6])))
                .collect();
            let candidate_cost = graph.cost_with(&candidate, &kernel);
            let step_norm = step.iter().map(|v| v * v).sum::<f64>().sqrt();
            let accepted = candidate_cost.is_finite() && candidate_cost < cost;
            log.push(IterationRecord {
                iteration,
                cost,
                candidate_cost,
                lambda,
                gradient_norm,
                step_norm,
                accepted,
            });
            if accepted {
                let decrease = cost - candidate_cost;
                debug_assert!(candidate_cost <= cost);
                poses = candidate;
                let previous = cost;
                cost = candidate_cost;
                lambda = (lambda / 10.0).max(opts.lambda_min);
                if decrease <= opts.rel_tol * previous {
                    termination = Termination::CostDecrease;
                    break 'outer;
                }
                break;
            }
            if lambda >= opts.lambda_max {
                termination = Termination::DampingLimit;
                break 'outer;
            }
            lambda = (lambda * 10.0).min(opts.lambda_max);
        }
    }
    Ok(OptimizationResult {
        poses: graph.nodes.iter().zip(&poses).map(|(n, p)| (n.frame, *p)).collect(),
        initial_cost,
        final_cost: cost,
        iterations: log,
        termination,
    })
}
