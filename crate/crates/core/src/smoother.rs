//! Global error-state EKF with a Rauch–Tung–Striebel backward pass over absolute pose
//! measurements.
//!
//! The nominal state is `[p, q, v, w]` under a constant-velocity model: `p += v dt`,
//! `q <- q ⊗ exp(w dt)` with `w` in the body frame. Uncertainty lives in a 12-dim
//! error state ordered `[δp, δθ, δv, δω]`, with `δθ` a right perturbation of `q`.
//! Process noise is piecewise-constant white acceleration (linear and angular).

use log::warn;
use nalgebra::{SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{Mat3, Pose, Rotation, Vec3};

pub type Mat12 = SMatrix<f64, 12, 12>;
pub type Vec12 = SVector<f64, 12>;
type Mat6 = SMatrix<f64, 6, 6>;

const SYMMETRY_TOL: f64 = 1e-10;
const PSD_TOL: f64 = -1e-9;
const GAIN_REGULARIZATION: f64 = 1e-12;

const P: usize = 0;
const TH: usize = 3;
const V: usize = 6;
const W: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Measurement noise on translation, meters.
    pub sigma_meas_trans: f64,
    /// Measurement noise on rotation, radians.
    pub sigma_meas_rot: f64,
    /// Standard deviation of the white linear acceleration, m/s².
    pub q_accel: f64,
    /// Standard deviation of the white angular acceleration, rad/s².
    pub q_alpha: f64,
    /// Seconds per frame; taken from the sequence frame rate, not from config files.
    #[serde(skip)]
    pub dt: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            sigma_meas_trans: 0.005,
            sigma_meas_rot: 1f64.to_radians(),
            q_accel: 0.5,
            q_alpha: 0.5,
            dt: 1.0 / 15.0,
        }
    }
}

impl NoiseConfig {
    pub fn with_frame_rate(mut self, hz: f64) -> Self {
        self.dt = 1.0 / hz;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sigma_meas_trans", self.sigma_meas_trans),
            ("sigma_meas_rot", self.sigma_meas_rot),
            ("q_accel", self.q_accel),
            ("q_alpha", self.q_alpha),
            ("dt", self.dt),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "noise parameter {name} must be strictly positive, got {value}"
                )));
            }
        }
        Ok(())
    }

    fn measurement_cov(&self) -> Mat6 {
        let mut r = Mat6::zeros();
        let st = self.sigma_meas_trans * self.sigma_meas_trans;
        let sr = self.sigma_meas_rot * self.sigma_meas_rot;
        for k in 0..3 {
            r[(k, k)] = st;
            r[(k + 3, k + 3)] = sr;
        }
        r
    }

    fn process_cov(&self, dt: f64) -> Mat12 {
        let mut q = Mat12::zeros();
        let dt2 = dt * dt;
        for (pos, vel, sigma) in [(P, V, self.q_accel), (TH, W, self.q_alpha)] {
            let s2 = sigma * sigma;
            for k in 0..3 {
                q[(pos + k, pos + k)] = s2 * dt2 * dt2 / 4.0;
                q[(pos + k, vel + k)] = s2 * dt2 * dt / 2.0;
                q[(vel + k, pos + k)] = s2 * dt2 * dt / 2.0;
                q[(vel + k, vel + k)] = s2 * dt2;
            }
        }
        q
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterState {
    pub p: Vec3,
    pub q: Rotation,
    pub v: Vec3,
    pub w: Vec3,
    /// Error-state covariance ordered `[δp, δθ, δv, δω]`.
    pub cov: Mat12,
}

impl FilterState {
    pub fn pose(&self) -> Pose {
        Pose::new(self.q, self.p)
    }

    /// Constant-velocity propagation over `dt`; returns the new state and the
    /// error-state transition matrix used.
    pub fn predict(&self, noise: &NoiseConfig, dt: f64) -> (FilterState, Mat12) {
        let step = Rotation::exp(&(self.w * dt));
        let mut f = Mat12::identity();
        f.fixed_view_mut::<3, 3>(P, V)
            .copy_from(&(Mat3::identity() * dt));
        f.fixed_view_mut::<3, 3>(TH, TH)
            .copy_from(&step.inverse().matrix());
        f.fixed_view_mut::<3, 3>(TH, W)
            .copy_from(&(Mat3::identity() * dt));
        let cov = symmetrize(&(f * self.cov * f.transpose() + noise.process_cov(dt)));
        let q = (self.q * step).aligned_with(&self.q);
        (
            FilterState {
                p: self.p + self.v * dt,
                q,
                v: self.v,
                w: self.w,
                cov,
            },
            f,
        )
    }

    /// Kalman update with an observed pose. `H` selects `[δp, δθ]`.
    pub fn update(&self, z: &Pose, noise: &NoiseConfig) -> Result<FilterState, &'static str> {
        let zq = z.rotation.aligned_with(&self.q);
        let mut innovation = SVector::<f64, 6>::zeros();
        innovation
            .fixed_rows_mut::<3>(0)
            .copy_from(&(z.translation - self.p));
        innovation
            .fixed_rows_mut::<3>(3)
            .copy_from(&(self.q.inverse() * zq).log());

        let r = noise.measurement_cov();
        let p_hx = self.cov.fixed_view::<12, 6>(0, 0).into_owned();
        let s = self.cov.fixed_view::<6, 6>(0, 0).into_owned() + r;
        let s_chol = s.cholesky().ok_or("innovation covariance is not positive definite")?;
        // K = P Hᵀ S⁻¹, solved as S Kᵀ = H P
        let gain = s_chol.solve(&p_hx.transpose()).transpose();
        let delta = gain * innovation;

        let mut i_kh = Mat12::identity();
        let mut kh = i_kh.fixed_view_mut::<12, 6>(0, 0);
        kh -= &gain;
        let cov = symmetrize(
            &(i_kh * self.cov * i_kh.transpose() + gain * r * gain.transpose()),
        );
        Ok(self.retract(&delta, cov))
    }

    fn retract(&self, delta: &Vec12, cov: Mat12) -> FilterState {
        let q = (self.q * Rotation::exp(&delta.fixed_rows::<3>(TH).into_owned()))
            .aligned_with(&self.q);
        FilterState {
            p: self.p + delta.fixed_rows::<3>(P),
            q,
            v: self.v + delta.fixed_rows::<3>(V),
            w: self.w + delta.fixed_rows::<3>(W),
            cov,
        }
    }

    /// Error-state difference `self ⊟ other`.
    pub fn difference(&self, other: &FilterState) -> Vec12 {
        let mut d = Vec12::zeros();
        d.fixed_rows_mut::<3>(P).copy_from(&(self.p - other.p));
        d.fixed_rows_mut::<3>(TH)
            .copy_from(&(other.q.inverse() * self.q).log());
        d.fixed_rows_mut::<3>(V).copy_from(&(self.v - other.v));
        d.fixed_rows_mut::<3>(W).copy_from(&(self.w - other.w));
        d
    }
}

/// One frame of the forward pass.
#[derive(Clone, Debug)]
pub struct ForwardStep {
    pub frame: usize,
    /// False for frames without a measurement (predict-only).
    pub measured: bool,
    pub predicted: FilterState,
    pub updated: FilterState,
    /// Transition from the previous step's updated state to `predicted`.
    pub transition: Mat12,
}

#[derive(Clone, Debug)]
pub struct SmoothedFrame {
    pub frame: usize,
    pub pose: Pose,
    pub cov: Mat12,
}

#[derive(Clone, Debug)]
pub struct SmoothedTrajectory {
    pub frames: Vec<SmoothedFrame>,
    /// True for frames that had no measurement.
    pub gap_mask: Vec<bool>,
}

impl SmoothedTrajectory {
    pub fn poses(&self) -> Vec<(usize, Pose)> {
        self.frames.iter().map(|f| (f.frame, f.pose)).collect()
    }

    /// Wraps an externally produced trajectory (e.g. read back from disk). Covariances
    /// are unknown and set to zero.
    pub fn from_poses(poses: &[(usize, Pose)], gap_mask: Vec<bool>) -> Result<Self> {
        if gap_mask.len() != poses.len() {
            return Err(Error::InvalidInput(format!(
                "gap mask has {} entries for {} frames",
                gap_mask.len(),
                poses.len()
            )));
        }
        check_increasing(poses)?;
        Ok(SmoothedTrajectory {
            frames: poses
                .iter()
                .map(|&(frame, pose)| SmoothedFrame {
                    frame,
                    pose,
                    cov: Mat12::zeros(),
                })
                .collect(),
            gap_mask,
        })
    }
}

fn symmetrize(m: &Mat12) -> Mat12 {
    (m + m.transpose()) * 0.5
}

fn check_covariance(cov: &Mat12, frame: usize, stage: &str) -> Result<()> {
    let asym = (cov - cov.transpose()).abs().max();
    if asym > SYMMETRY_TOL {
        return Err(Error::NumericalFailure {
            frame,
            reason: format!("{stage} covariance asymmetric by {asym:e}"),
        });
    }
    let min_eig = SymmetricEigen::new(*cov).eigenvalues.min();
    if !(min_eig >= PSD_TOL) {
        return Err(Error::NumericalFailure {
            frame,
            reason: format!("{stage} covariance lost positive semi-definiteness (min eigenvalue {min_eig:e})"),
        });
    }
    Ok(())
}

fn check_increasing(poses: &[(usize, Pose)]) -> Result<()> {
    for w in poses.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::InvalidInput(format!(
                "frame indices must be strictly increasing, got {} after {}",
                w[1].0, w[0].0
            )));
        }
    }
    Ok(())
}

/// Two-point initialization at the first measured frame.
fn initial_state(first: &(usize, Pose), second: &(usize, Pose), noise: &NoiseConfig) -> FilterState {
    let span = (second.0 - first.0) as f64 * noise.dt;
    let (z0, z1) = (&first.1, &second.1);
    let q1 = z1.rotation.aligned_with(&z0.rotation);
    let st = noise.sigma_meas_trans.powi(2);
    let sr = noise.sigma_meas_rot.powi(2);
    let mut cov = Mat12::zeros();
    for k in 0..3 {
        cov[(P + k, P + k)] = st;
        cov[(TH + k, TH + k)] = sr;
        cov[(V + k, V + k)] = 2.0 * st / (span * span) + noise.q_accel.powi(2) * span * span;
        cov[(W + k, W + k)] = 2.0 * sr / (span * span) + noise.q_alpha.powi(2) * span * span;
    }
    FilterState {
        p: z0.translation,
        q: z0.rotation,
        v: (z1.translation - z0.translation) / span,
        w: (z0.rotation.inverse() * q1).log() / span,
        cov,
    }
}

/// Forward EKF pass. Frames between measurements are predict-only.
pub fn ekf_forward(measurements: &[(usize, Pose)], noise: &NoiseConfig) -> Result<Vec<ForwardStep>> {
    noise.validate()?;
    if measurements.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "smoother needs at least 2 measurements, got {}",
            measurements.len()
        )));
    }
    check_increasing(measurements)?;
    if let Some((frame, _)) = measurements.iter().find(|(_, z)| !z.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite measurement at frame {frame}")));
    }

    let first_frame = measurements[0].0;
    let last_frame = measurements[measurements.len() - 1].0;
    let init = initial_state(&measurements[0], &measurements[1], noise);
    check_covariance(&init.cov, first_frame, "initial")?;

    let mut steps = Vec::with_capacity(last_frame - first_frame + 1);
    steps.push(ForwardStep {
        frame: first_frame,
        measured: true,
        predicted: init,
        updated: init,
        transition: Mat12::identity(),
    });

    let mut next = measurements[1..].iter().peekable();
    for frame in first_frame + 1..=last_frame {
        let prev = &steps[steps.len() - 1].updated;
        let (predicted, transition) = prev.predict(noise, noise.dt);
        check_covariance(&predicted.cov, frame, "predicted")?;
        let measurement = next.next_if(|(f, _)| *f == frame);
        let updated = match measurement {
            Some((_, z)) => {
                let updated = predicted
                    .update(z, noise)
                    .map_err(|reason| Error::NumericalFailure {
                        frame,
                        reason: reason.into(),
                    })?;
                check_covariance(&updated.cov, frame, "updated")?;
                updated
            }
            None => predicted,
        };
        steps.push(ForwardStep {
            frame,
            measured: measurement.is_some(),
            predicted,
            updated,
            transition,
        });
    }
    Ok(steps)
}

/// Filtered (forward-only) poses.
pub fn filtered_poses(forward: &[ForwardStep]) -> Vec<(usize, Pose)> {
    forward.iter().map(|s| (s.frame, s.updated.pose())).collect()
}

/// Smoothed full states, same length and order as `forward`.
pub fn rts_states(forward: &[ForwardStep]) -> Result<Vec<FilterState>> {
    let n = forward.len();
    if n == 0 {
        return Err(Error::InsufficientData("empty forward pass".into()));
    }
    let mut smoothed = vec![forward[n - 1].updated; n];
    for t in (0..n - 1).rev() {
        let filtered = &forward[t].updated;
        let next = &forward[t + 1];
        let f = &next.transition;
        let p_pred = &next.predicted.cov;

        // G = P_t Fᵀ P_pred⁻¹, solved as P_pred Gᵀ = F P_t
        let rhs = f * filtered.cov;
        let chol = match p_pred.cholesky() {
            Some(c) => c,
            None => {
                warn!(
                    "frame {}: singular predicted covariance, regularizing with {GAIN_REGULARIZATION:e}·I",
                    next.frame
                );
                (p_pred + Mat12::identity() * GAIN_REGULARIZATION)
                    .cholesky()
                    .ok_or_else(|| Error::NumericalFailure {
                        frame: next.frame,
                        reason: "predicted covariance singular after regularization".into(),
                    })?
            }
        };
        let gain = chol.solve(&rhs).transpose();

        let correction = gain * smoothed[t + 1].difference(&next.predicted);
        let cov = symmetrize(
            &(filtered.cov + gain * (smoothed[t + 1].cov - p_pred) * gain.transpose()),
        );
        check_covariance(&cov, forward[t].frame, "smoothed")?;
        let mut state = filtered.retract(&correction, cov);
        state.q = state.q.aligned_with(&smoothed[t + 1].q);
        smoothed[t] = state;
    }
    Ok(smoothed)
}

/// Backward RTS pass producing the smoothed trajectory.
pub fn rts_backward(forward: &[ForwardStep]) -> Result<SmoothedTrajectory> {
    let states = rts_states(forward)?;
    Ok(SmoothedTrajectory {
        frames: forward
            .iter()
            .zip(&states)
            .map(|(step, s)| SmoothedFrame {
                frame: step.frame,
                pose: s.pose(),
                cov: s.cov,
            })
            .collect(),
        gap_mask: forward.iter().map(|s| !s.measured).collect(),
    })
}

/// Normalized estimation error squared of `estimate` against a known true state,
/// `eᵀ P⁻¹ e` with `e = truth ⊟ estimate`.
pub fn nees(estimate: &FilterState, truth: &FilterState) -> Option<f64> {
    let e = truth.difference(estimate);
    let chol = estimate.cov.cholesky()?;
    Some(e.dot(&chol.solve(&e)))
}

/// Forward filter followed by the RTS backward pass.
pub fn smooth(measurements: &[(usize, Pose)], noise: &NoiseConfig) -> Result<SmoothedTrajectory> {
    rts_backward(&ekf_forward(measurements, noise)?)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::dataio::synth::{add_pose_noise, constant_velocity_trajectory};

    fn rmse(est: &[(usize, Pose)], truth: &[Pose]) -> f64 {
        let sum: f64 = est
            .iter()
            .zip(truth)
            .map(|((_, e), t)| (e.translation - t.translation).norm_squared())
            .sum();
        (sum / est.len() as f64).sqrt()
    }

    fn indexed(poses: &[Pose]) -> Vec<(usize, Pose)> {
        poses.iter().copied().enumerate().collect()
    }

    #[test]
    fn identity_measurements_are_a_fixed_point() {
        let noise = NoiseConfig {
            sigma_meas_trans: 1e-6,
            sigma_meas_rot: 1e-6,
            ..NoiseConfig::default()
        };
        let meas = indexed(&vec![Pose::identity(); 30]);
        for step in ekf_forward(&meas, &noise).unwrap() {
            let (r, t) = step.updated.pose().distance(&Pose::identity());
            assert!(r < 1e-6 && t < 1e-6);
        }
    }

    #[test]
    fn single_propagation_step() {
        let state = FilterState {
            p: Vec3::zeros(),
            q: Rotation::identity(),
            v: Vec3::new(1.0, 0.0, 0.0),
            w: Vec3::zeros(),
            cov: Mat12::identity() * 1e-4,
        };
        let (next, _) = state.predict(&NoiseConfig::default(), 0.1);
        assert_eq!(next.p, Vec3::new(0.1, 0.0, 0.0));
    }

    #[test]
    fn filtering_beats_raw_measurements_on_constant_velocity_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let noise = NoiseConfig {
            sigma_meas_trans: 0.003,
            sigma_meas_rot: 0.5f64.to_radians(),
            ..NoiseConfig::default()
        };
        let truth = constant_velocity_trajectory(
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.6)),
            &Vec3::new(0.1, 0.0, 0.0),
            &Vec3::new(0.0, 0.0, 0.2),
            noise.dt,
            150,
        );
        let meas: Vec<_> = truth
            .iter()
            .map(|p| add_pose_noise(&mut rng, p, 0.003, 0.5f64.to_radians()))
            .collect();
        let filtered = filtered_poses(&ekf_forward(&indexed(&meas), &noise).unwrap());
        assert!(rmse(&filtered, &truth) < rmse(&indexed(&meas), &truth));
    }

    #[test]
    fn noiseless_static_sequence_is_reproduced() {
        let pose = Pose::new(
            Rotation::exp(&Vec3::new(0.3, -0.2, 0.1)),
            Vec3::new(0.05, -0.02, 0.7),
        );
        let meas = indexed(&vec![pose; 40]);
        let smoothed = smooth(&meas, &NoiseConfig::default()).unwrap();
        for f in &smoothed.frames {
            let (r, t) = f.pose.distance(&pose);
            assert!(r < 1e-9 && t < 1e-9, "frame {}: {r} {t}", f.frame);
        }
    }

    #[test]
    fn outlier_frame_is_attenuated() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Pose::from_translation(Vec3::new(0.0, 0.0, 0.6));
        let mut meas: Vec<_> = (0..60)
            .map(|_| add_pose_noise(&mut rng, &truth, 0.005, 1f64.to_radians()))
            .collect();
        let outlier = 30;
        let kick = Pose::new(
            Rotation::exp(&Vec3::new(0.0, 5f64.to_radians(), 0.0)),
            Vec3::new(0.02, 0.0, 0.0),
        );
        meas[outlier] = truth.compose(&kick);
        let smoothed = smooth(&indexed(&meas), &NoiseConfig::default()).unwrap();
        let (r, t) = smoothed.frames[outlier].pose.distance(&truth);
        assert!(r < 2.5f64.to_radians(), "rotation error {}", r.to_degrees());
        assert!(t < 0.010, "translation error {t}");
    }

    #[test]
    fn smoothing_beats_filtering() {
        let noise = NoiseConfig::default();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let truth = constant_velocity_trajectory(
                &Pose::from_translation(Vec3::new(0.1, 0.0, 0.8)),
                &Vec3::new(0.05, -0.02, 0.01),
                &Vec3::new(0.1, 0.3, 0.0),
                noise.dt,
                100,
            );
            let meas: Vec<_> = truth
                .iter()
                .map(|p| add_pose_noise(&mut rng, p, 0.005, 1f64.to_radians()))
                .collect();
            let forward = ekf_forward(&indexed(&meas), &noise).unwrap();
            let smoothed = rts_backward(&forward).unwrap();
            assert!(rmse(&smoothed.poses(), &truth) <= rmse(&filtered_poses(&forward), &truth));
        }
    }

    #[test]
    fn gaps_are_bridged_with_predictions() {
        let truth = constant_velocity_trajectory(
            &Pose::from_translation(Vec3::new(0.0, 0.0, 0.5)),
            &Vec3::new(0.03, 0.0, 0.0),
            &Vec3::new(0.0, 0.1, 0.0),
            1.0 / 15.0,
            30,
        );
        let meas: Vec<_> = indexed(&truth)
            .into_iter()
            .filter(|(f, _)| !(10..15).contains(f))
            .collect();
        let smoothed = smooth(&meas, &NoiseConfig::default()).unwrap();
        assert_eq!(smoothed.frames.len(), 30);
        assert_eq!(smoothed.gap_mask.iter().filter(|g| **g).count(), 5);
        assert!(smoothed.gap_mask[12]);
        for f in &smoothed.frames {
            let (r, t) = f.pose.distance(&truth[f.frame]);
            assert!(r < 1e-9 && t < 1e-9);
        }
    }

    #[test]
    fn hemisphere_stays_aligned_and_output_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let truth = constant_velocity_trajectory(
            &Pose::identity(),
            &Vec3::zeros(),
            &Vec3::new(0.0, 0.0, 2.0),
            1.0 / 15.0,
            80,
        );
        // flip every other measured quaternion to the opposite hemisphere
        let meas: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut z = add_pose_noise(&mut rng, p, 0.002, 0.01);
                if i % 2 == 1 {
                    z.rotation = z.rotation.negated();
                }
                (i, z)
            })
            .collect();
        let forward = ekf_forward(&meas, &NoiseConfig::default()).unwrap();
        let a = rts_backward(&forward).unwrap();
        for w in a.frames.windows(2) {
            assert!(w[0].pose.rotation.dot(&w[1].pose.rotation) >= 0.0);
        }
        let b = smooth(&meas, &NoiseConfig::default()).unwrap();
        for (x, y) in a.frames.iter().zip(&b.frames) {
            assert_eq!(x.pose, y.pose);
            assert_eq!(x.cov, y.cov);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let noise = NoiseConfig::default();
        assert!(matches!(
            ekf_forward(&[(0, Pose::identity())], &noise),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            ekf_forward(&[(3, Pose::identity()), (3, Pose::identity())], &noise),
            Err(Error::InvalidInput(_))
        ));
        let bad = NoiseConfig {
            q_accel: 0.0,
            ..noise
        };
        assert!(ekf_forward(&[(0, Pose::identity()), (1, Pose::identity())], &bad).is_err());
    }

    #[test]
    fn nees_is_consistent_over_monte_carlo_runs() {
        use crate::dataio::synth::white_acceleration_trajectory;
        use statrs::distribution::{ChiSquared, ContinuousCDF};

        let noise = NoiseConfig::default();
        let (runs, frames) = (50, 120);
        let mut filtered = vec![0.0; frames];
        let mut smoothed = vec![0.0; frames];
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(500 + run as u64);
            let truth = white_acceleration_trajectory(
                &mut rng,
                &Pose::from_translation(Vec3::new(0.0, 0.0, 0.6)),
                &Vec3::new(0.1, 0.0, 0.0),
                &Vec3::new(0.0, 0.0, 0.2),
                noise.q_accel,
                noise.q_alpha,
                noise.dt,
                frames,
            );
            let meas: Vec<_> = truth
                .iter()
                .map(|s| add_pose_noise(&mut rng, &s.pose, noise.sigma_meas_trans, noise.sigma_meas_rot))
                .collect();
            let forward = ekf_forward(&indexed(&meas), &noise).unwrap();
            let states = rts_states(&forward).unwrap();
            for k in 0..frames {
                let t = FilterState {
                    p: truth[k].pose.translation,
                    q: truth[k].pose.rotation,
                    v: truth[k].velocity,
                    w: truth[k].angular_velocity,
                    cov: Mat12::zeros(),
                };
                filtered[k] += nees(&forward[k].updated, &t).unwrap() / runs as f64;
                smoothed[k] += nees(&states[k], &t).unwrap() / runs as f64;
            }
        }
        let chi = ChiSquared::new((12 * runs) as f64).unwrap();
        let (lo, hi) = (chi.inverse_cdf(0.025) / runs as f64, chi.inverse_cdf(0.975) / runs as f64);
        for (name, v) in [("filtered", &filtered), ("smoothed", &smoothed)] {
            let inside = v.iter().filter(|&&x| x >= lo && x <= hi).count();
            let mean = v.iter().sum::<f64>() / frames as f64;
            assert!((lo..=hi).contains(&mean), "{name}: mean NEES {mean}");
            assert!(inside * 10 >= frames * 9, "{name}: {inside}/{frames} steps inside [{lo}, {hi}]");
        }
    }
}
