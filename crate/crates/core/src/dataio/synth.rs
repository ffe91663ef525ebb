//! Synthetic sequences with retained ground truth.
//!
//! The in-memory helpers here back the generator-oracle tests across the crate; the
//! on-disk generator ([`synth_sequence`]) renders a textured box into depth maps, masks
//! and color frames and emits every file a real sequence directory would contain.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal, UnitSphere};

use crate::dataio::depth::{write_depth_png, write_gray_png, write_mask_png, DepthMap, Mask};
use crate::dataio::manifest::{SequenceManifest, MANIFEST_FILE};
use crate::dataio::model::write_model_points;
use crate::dataio::poses::write_poses;
use crate::dataio::tracks::{write_tracks, TrackObservation, TrackTable};
use crate::error::{Error, Result};
use crate::relpose::CameraIntrinsics;
use crate::se3::{Pose, Rotation, Vec3};

/// Exact constant-velocity motion under the smoother's model: `p += v dt`,
/// `q <- q ⊗ exp(w dt)` (body-frame angular velocity).
pub fn constant_velocity_trajectory(
    start: &Pose,
    velocity: &Vec3,
    angular_velocity: &Vec3,
    dt: f64,
    frames: usize,
) -> Vec<Pose> {
    (0..frames)
        .map(|k| {
            let t = k as f64 * dt;
            Pose::new(
                start.rotation * Rotation::exp(&(angular_velocity * t)),
                start.translation + velocity * t,
            )
        })
        .collect()
}

/// Full kinematic state of a simulated trajectory sample.
#[derive(Clone, Copy, Debug)]
pub struct KinematicSample {
    pub pose: Pose,
    pub velocity: Vec3,
    pub angular_velocity: Vec3,
}

/// Constant-velocity motion driven by piecewise-constant white accelerations with the
/// given standard deviations, the process model the smoother assumes.
pub fn white_acceleration_trajectory<R: Rng>(
    rng: &mut R,
    start: &Pose,
    velocity: &Vec3,
    angular_velocity: &Vec3,
    sigma_accel: f64,
    sigma_alpha: f64,
    dt: f64,
    frames: usize,
) -> Vec<KinematicSample> {
    let mut out = Vec::with_capacity(frames);
    let mut sample = KinematicSample {
        pose: *start,
        velocity: *velocity,
        angular_velocity: *angular_velocity,
    };
    for _ in 0..frames {
        out.push(sample);
        let a = gaussian3(rng, sigma_accel);
        let alpha = gaussian3(rng, sigma_alpha);
        let rot_step = sample.angular_velocity * dt + alpha * (0.5 * dt * dt);
        sample = KinematicSample {
            pose: Pose::new(
                sample.pose.rotation * Rotation::exp(&rot_step),
                sample.pose.translation + sample.velocity * dt + a * (0.5 * dt * dt),
            ),
            velocity: sample.velocity + a * dt,
            angular_velocity: sample.angular_velocity + alpha * dt,
        };
    }
    out
}

pub fn gaussian3<R: Rng>(rng: &mut R, sigma: f64) -> Vec3 {
    let mut draw = || -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        z * sigma
    };
    Vec3::new(draw(), draw(), draw())
}

/// `pose` with additive Gaussian translation noise and a right-multiplied Gaussian
/// rotation perturbation (per-axis standard deviations).
pub fn add_pose_noise<R: Rng>(rng: &mut R, pose: &Pose, sigma_trans: f64, sigma_rot: f64) -> Pose {
    let dp = gaussian3(rng, sigma_trans);
    let dth = gaussian3(rng, sigma_rot);
    Pose::new(
        pose.rotation * Rotation::exp(&dth),
        pose.translation + dp,
    )
}

/// Gross error of exactly `rot_rad` / `trans_m` in random directions.
pub fn corrupt_pose<R: Rng>(rng: &mut R, pose: &Pose, rot_rad: f64, trans_m: f64) -> Pose {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let dir: [f64; 3] = UnitSphere.sample(rng);
    Pose::new(
        pose.rotation * Rotation::exp(&(Vec3::from(axis) * rot_rad)),
        pose.translation + Vec3::from(dir) * trans_m,
    )
}

/// Points sampled uniformly on the surface of an axis-aligned box centred at the origin.
pub fn box_surface_points<R: Rng>(rng: &mut R, extents: &Vec3, count: usize) -> Vec<Vec3> {
    let h = extents * 0.5;
    let areas = [extents.y * extents.z, extents.x * extents.z, extents.x * extents.y];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    (0..count)
        .map(|_| {
            let mut pick = rng.random_range(0.0..total);
            let mut face = 0;
            while pick >= 2.0 * areas[face] && face < 2 {
                pick -= 2.0 * areas[face];
                face += 1;
            }
            let sign = if pick < areas[face] { 1.0 } else { -1.0 };
            let mut p = Vec3::new(
                rng.random_range(-h.x..h.x),
                rng.random_range(-h.y..h.y),
                rng.random_range(-h.z..h.z),
            );
            p[face] = sign * h[face];
            p
        })
        .collect()
}

/// Object motion used by the on-disk generator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionProfile {
    Static,
    /// Exact constant linear and body-frame angular velocity.
    ConstantVelocity,
    /// Smooth hand-held style motion: sinusoidal translation and a slow tumble.
    Handheld,
}

impl std::str::FromStr for MotionProfile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(MotionProfile::Static),
            "constant-velocity" => Ok(MotionProfile::ConstantVelocity),
            "handheld" => Ok(MotionProfile::Handheld),
            other => Err(Error::InvalidSpec(format!("unknown motion profile '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthNoise {
    /// Absolute pose noise, meters / radians (per axis).
    pub abs_trans: f64,
    pub abs_rot: f64,
    /// 2D track noise, pixels.
    pub track_px: f64,
    /// Depth noise before millimetre quantization, meters.
    pub depth: f64,
}

impl SynthNoise {
    pub fn zero() -> Self {
        SynthNoise {
            abs_trans: 0.0,
            abs_rot: 0.0,
            track_px: 0.0,
            depth: 0.0,
        }
    }
}

impl Default for SynthNoise {
    fn default() -> Self {
        SynthNoise {
            abs_trans: 0.005,
            abs_rot: 1f64.to_radians(),
            track_px: 0.3,
            depth: 0.001,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub sequence_id: String,
    pub frames: usize,
    pub rate_hz: f64,
    pub motion: MotionProfile,
    pub noise: SynthNoise,
    /// Frames whose absolute pose receives a gross error.
    pub corrupted_frames: Vec<usize>,
    /// Magnitude of the gross errors: radians, meters.
    pub corruption_rot: f64,
    pub corruption_trans: f64,
    pub intrinsics: CameraIntrinsics,
    /// Box dimensions, meters.
    pub extents: Vec3,
    pub query_points: usize,
    pub model_points: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            sequence_id: "synth".into(),
            frames: 500,
            rate_hz: 15.0,
            motion: MotionProfile::Handheld,
            noise: SynthNoise::default(),
            corrupted_frames: Vec::new(),
            corruption_rot: 20f64.to_radians(),
            corruption_trans: 0.05,
            intrinsics: CameraIntrinsics {
                fx: 300.0,
                fy: 300.0,
                cx: 160.0,
                cy: 120.0,
                width: 320,
                height: 240,
            },
            extents: Vec3::new(0.12, 0.16, 0.09),
            query_points: 300,
            model_points: 2000,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// The default spec with every noise source disabled.
    pub fn noiseless() -> Self {
        SynthSpec {
            noise: SynthNoise::zero(),
            ..SynthSpec::default()
        }
    }

    /// Picks `count` distinct corrupted frames, at least two frames apart, away from
    /// the sequence ends.
    pub fn with_random_corruptions(mut self, count: usize) -> Result<Self> {
        if count == 0 {
            self.corrupted_frames.clear();
            return Ok(self);
        }
        let slots = self.frames.saturating_sub(10) / 3;
        if count > slots {
            return Err(Error::InvalidSpec(format!(
                "cannot place {count} corrupted frames in a {}-frame sequence",
                self.frames
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_c0de);
        let mut picked: Vec<usize> = sample(&mut rng, slots, count)
            .into_iter()
            .map(|s| 5 + 3 * s)
            .collect();
        picked.sort_unstable();
        self.corrupted_frames = picked;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidSpec("need at least 2 frames".into()));
        }
        if !(self.rate_hz.is_finite() && self.rate_hz > 0.0) {
            return Err(Error::InvalidSpec("frame rate must be positive".into()));
        }
        if let Some(bad) = self.corrupted_frames.iter().find(|&&f| f >= self.frames) {
            return Err(Error::InvalidSpec(format!(
                "corrupted frame {bad} outside 0..{}",
                self.frames
            )));
        }
        let n = &self.noise;
        if [n.abs_trans, n.abs_rot, n.track_px, n.depth]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::InvalidSpec("noise levels must be finite and non-negative".into()));
        }
        if self.extents.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::InvalidSpec("box extents must be positive".into()));
        }
        if self.query_points < 3 || self.model_points == 0 {
            return Err(Error::InvalidSpec("need at least 3 query points and 1 model point".into()));
        }
        self.intrinsics
            .validate()
            .map_err(|e| Error::InvalidSpec(e.to_string()))
    }

    /// Ground-truth object poses for every frame.
    pub fn ground_truth(&self) -> Vec<Pose> {
        let dt = 1.0 / self.rate_hz;
        let base = Pose::new(
            Rotation::exp(&Vec3::new(0.35, -0.5, 0.15)),
            Vec3::new(0.0, 0.0, 0.65),
        );
        match self.motion {
            MotionProfile::Static => vec![base; self.frames],
            MotionProfile::ConstantVelocity => constant_velocity_trajectory(
                &base.compose(&Pose::from_translation(Vec3::new(-0.03, 0.0, 0.0))),
                &Vec3::new(0.15 / (self.frames as f64 * dt), 0.0, 0.0),
                &Vec3::new(0.05, 0.25, 0.02),
                dt,
                self.frames,
            ),
            MotionProfile::Handheld => (0..self.frames)
                .map(|k| {
                    let t = k as f64 * dt;
                    let translation = base.translation
                        + Vec3::new(
                            0.06 * (2.0 * PI * 0.05 * t).sin(),
                            0.03 * (2.0 * PI * 0.08 * t + 0.4).sin(),
                            0.05 * (2.0 * PI * 0.03 * t).sin(),
                        );
                    let tumble = Vec3::new(
                        0.4 * (2.0 * PI * 0.04 * t).sin(),
                        0.25 * t,
                        0.3 * (2.0 * PI * 0.06 * t + 1.0).sin(),
                    );
                    Pose::new(base.rotation * Rotation::exp(&tumble), translation)
                })
                .collect(),
        }
    }
}

/// Paths and ground truth of a generated sequence.
#[derive(Clone, Debug)]
pub struct GeneratedSequence {
    pub dir: PathBuf,
    pub manifest: SequenceManifest,
    pub ground_truth: Vec<Pose>,
    pub absolute: Vec<Pose>,
    pub tracks: TrackTable,
}

/// Axis-aligned box in object coordinates, intersected with a camera ray.
struct BoxModel {
    half: Vec3,
}

impl BoxModel {
    /// Smallest positive ray parameter and the face axis hit, with the ray given in
    /// object coordinates.
    fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, usize)> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        let mut axis = 0;
        for k in 0..3 {
            if dir[k].abs() < 1e-15 {
                if origin[k].abs() > self.half[k] {
                    return None;
                }
                continue;
            }
            let a = (-self.half[k] - origin[k]) / dir[k];
            let b = (self.half[k] - origin[k]) / dir[k];
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if lo > t_near {
                t_near = lo;
                axis = k;
            }
            t_far = t_far.min(hi);
        }
        (t_near <= t_far && t_near > 0.0).then_some((t_near, axis))
    }
}

const BACKGROUND_DEPTH_M: f64 = 1.5;

fn texture(p: &Vec3, axis: usize) -> u8 {
    let (a, b) = match axis {
        0 => (p.y, p.z),
        1 => (p.x, p.z),
        _ => (p.x, p.y),
    };
    let cell = ((a / 0.02).floor() as i64 + (b / 0.02).floor() as i64).rem_euclid(2);
    if cell == 0 {
        200
    } else {
        60
    }
}

/// Renders depth (meters, z-depth), mask and a textured gray image of the box at `pose`.
fn render(
    model: &BoxModel,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> (Vec<f64>, Vec<bool>, Vec<u8>) {
    let n = (k.width * k.height) as usize;
    let mut depth = vec![BACKGROUND_DEPTH_M; n];
    let mut mask = vec![false; n];
    let mut gray = vec![110u8; n];
    let inv = pose.inverse();
    let origin = inv.translation;
    for v in 0..k.height {
        for u in 0..k.width {
            let ray = Vec3::new((u as f64 - k.cx) / k.fx, (v as f64 - k.cy) / k.fy, 1.0);
            let dir = inv.rotation.rotate(&ray);
            if let Some((t, axis)) = model.intersect(&origin, &dir) {
                let idx = (v * k.width + u) as usize;
                depth[idx] = t;
                mask[idx] = true;
                gray[idx] = texture(&(origin + dir * t), axis);
            }
        }
    }
    (depth, mask, gray)
}

/// Is the object-frame surface point visible from the camera (front-facing, in view)?
fn point_visible(model: &BoxModel, pose: &Pose, p_obj: &Vec3) -> bool {
    let cam_in_obj = pose.inverse().translation;
    for axis in 0..3 {
        if (p_obj[axis].abs() - model.half[axis]).abs() < 1e-12 {
            let outward = p_obj[axis].signum();
            return (cam_in_obj[axis] - p_obj[axis]) * outward > 0.0;
        }
    }
    false
}

/// Writes a complete synthetic sequence into `dir` (created if missing).
pub fn synth_sequence(spec: &SynthSpec, dir: &Path) -> Result<GeneratedSequence> {
    spec.validate()?;
    let k = &spec.intrinsics;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for sub in ["depth", "mask", "rgb"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let model = BoxModel {
        half: spec.extents * 0.5,
    };
    let gt = spec.ground_truth();

    let absolute: Vec<Pose> = gt
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let noisy = add_pose_noise(&mut rng, p, spec.noise.abs_trans, spec.noise.abs_rot);
            if spec.corrupted_frames.contains(&i) {
                corrupt_pose(&mut rng, &noisy, spec.corruption_rot, spec.corruption_trans)
            } else {
                noisy
            }
        })
        .collect();

    let query_points = box_surface_points(&mut rng, &spec.extents, spec.query_points);
    let model_points = box_surface_points(&mut rng, &spec.extents, spec.model_points);
    let pixel_noise = Normal::new(0.0, spec.noise.track_px.max(f64::MIN_POSITIVE))
        .expect("finite sigma");
    let depth_noise = Normal::new(0.0, spec.noise.depth.max(f64::MIN_POSITIVE))
        .expect("finite sigma");

    let mut tracks = TrackTable::new(spec.query_points);
    for (frame, pose) in gt.iter().enumerate() {
        let (depth, mask, gray) = render(&model, pose, k);
        let depth_mm: Vec<u16> = depth
            .iter()
            .map(|&d| {
                let noisy = if spec.noise.depth > 0.0 {
                    d + depth_noise.sample(&mut rng)
                } else {
                    d
                };
                (noisy * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16
            })
            .collect();
        let name = format!("{frame:06}.png");
        write_depth_png(
            &dir.join("depth").join(&name),
            &DepthMap::from_millimeters(k.width, k.height, depth_mm)?,
        )?;
        write_mask_png(
            &dir.join("mask").join(&name),
            &Mask::new(k.width, k.height, mask)?,
        )?;
        write_gray_png(&dir.join("rgb").join(&name), k.width, k.height, &gray)?;

        for (qid, p_obj) in query_points.iter().enumerate() {
            let p_cam = pose.transform_point(p_obj);
            let mut u = k.fx * p_cam.x / p_cam.z + k.cx;
            let mut v = k.fy * p_cam.y / p_cam.z + k.cy;
            if spec.noise.track_px > 0.0 {
                u += pixel_noise.sample(&mut rng);
                v += pixel_noise.sample(&mut rng);
            }
            let in_bounds = p_cam.z > 0.0
                && u >= 0.0
                && v >= 0.0
                && u <= (k.width - 1) as f64
                && v <= (k.height - 1) as f64;
            let visible = in_bounds && point_visible(&model, pose, p_obj);
            tracks.push(
                qid,
                TrackObservation {
                    frame,
                    u: if in_bounds { u } else { u.clamp(0.0, (k.width - 1) as f64) },
                    v: if in_bounds { v } else { v.clamp(0.0, (k.height - 1) as f64) },
                    visible,
                },
            );
        }
    }

    let abs_indexed: Vec<(usize, Pose)> = absolute.iter().copied().enumerate().collect();
    let gt_indexed: Vec<(usize, Pose)> = gt.iter().copied().enumerate().collect();
    write_poses(&dir.join("absolute.csv"), &abs_indexed)?;
    write_poses(&dir.join("gt.csv"), &gt_indexed)?;
    write_tracks(&dir.join("tracks.csv"), &tracks)?;
    write_model_points(&dir.join("model.xyz"), &model_points)?;

    let manifest = SequenceManifest {
        sequence_id: spec.sequence_id.clone(),
        frame_count: spec.frames,
        frame_rate_hz: spec.rate_hz,
        intrinsics: *k,
        extents: Some([spec.extents.x, spec.extents.y, spec.extents.z]),
        depth_dir: "depth".into(),
        mask_dir: "mask".into(),
        rgb_dir: Some("rgb".into()),
        model_points: "model.xyz".into(),
        absolute_poses: "absolute.csv".into(),
        ground_truth_poses: Some("gt.csv".into()),
        tracks: "tracks.csv".into(),
        corrupted_frames: spec.corrupted_frames.clone(),
    };
    manifest.write(&dir.join(MANIFEST_FILE))?;

    Ok(GeneratedSequence {
        dir: dir.to_path_buf(),
        manifest,
        ground_truth: gt,
        absolute,
        tracks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SynthSpec {
        SynthSpec {
            frames: 6,
            query_points: 40,
            model_points: 50,
            intrinsics: CameraIntrinsics {
                fx: 120.0,
                fy: 120.0,
                cx: 40.0,
                cy: 30.0,
                width: 80,
                height: 60,
            },
            ..SynthSpec::default()
        }
    }

    #[test]
    fn default_spec_is_500_frames_at_15_hz() {
        let spec = SynthSpec::default();
        assert_eq!(spec.frames, 500);
        assert_eq!(spec.rate_hz, 15.0);
    }

    #[test]
    fn zero_noise_absolute_equals_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            noise: SynthNoise::zero(),
            ..small_spec()
        };
        let seq = synth_sequence(&spec, dir.path()).unwrap();
        assert_eq!(seq.absolute, seq.ground_truth);
    }

    #[test]
    fn same_seed_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        synth_sequence(&small_spec(), a.path()).unwrap();
        synth_sequence(&small_spec(), b.path()).unwrap();
        for rel in [
            "absolute.csv",
            "gt.csv",
            "tracks.csv",
            "model.xyz",
            MANIFEST_FILE,
            "depth/000003.png",
            "mask/000003.png",
            "rgb/000003.png",
        ] {
            let x = std::fs::read(a.path().join(rel)).unwrap();
            let y = std::fs::read(b.path().join(rel)).unwrap();
            assert_eq!(x, y, "{rel} differs");
        }
    }

    #[test]
    fn corruption_outside_range_is_rejected() {
        let spec = SynthSpec {
            corrupted_frames: vec![6],
            ..small_spec()
        };
        assert!(matches!(spec.validate(), Err(Error::InvalidSpec(_))));
        assert!(SynthSpec::default().with_random_corruptions(1000).is_err());
    }

    #[test]
    fn random_corruptions_are_separated() {
        let spec = SynthSpec::default().with_random_corruptions(10).unwrap();
        assert_eq!(spec.corrupted_frames.len(), 10);
        for w in spec.corrupted_frames.windows(2) {
            assert!(w[1] - w[0] >= 3);
        }
    }

    #[test]
    fn rendered_depth_matches_ray_cast() {
        let spec = small_spec();
        let pose = spec.ground_truth()[0];
        let model = BoxModel {
            half: spec.extents * 0.5,
        };
        let k = &spec.intrinsics;
        let (depth, mask, _) = render(&model, &pose, k);
        let centre = (k.cy as u32 * k.width + k.cx as u32) as usize;
        assert!(mask[centre]);
        // the box centre sits on the optical axis at 0.65 m; its surface is closer
        assert!(depth[centre] < 0.65 && depth[centre] > 0.65 - 0.1);
        assert!(!mask[0]);
        assert_eq!(depth[0], BACKGROUND_DEPTH_M);
    }
}
