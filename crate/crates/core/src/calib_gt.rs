//! Ground-truth object poses from motion capture.
//!
//! Naming follows `t_A_B`: the pose of frame A expressed in frame B. `t_OB_M` is the
//! object marker body in the mocap world, `t_CB_M` the camera marker body, `t_C_CB` the
//! hand-eye result, `t_O_C` the object in the camera, and `t_O_OB` the fixed offset from
//! the object to its marker body.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion};

use crate::error::{Error, Result};
use crate::se3::{Pose, Rotation, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MocapFrame {
    pub frame: usize,
    pub t_ob_m: Pose,
    pub t_cb_m: Pose,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HandEye {
    pub t_c_cb: Pose,
}

/// `T_O_OB = T_OB_M⁻¹ T_CB_M T_C_CB T_O_C` from one frame with a trusted object pose.
pub fn solve_object_offset(frame: &MocapFrame, handeye: &HandEye, t_o_c: &Pose) -> Pose {
    frame
        .t_ob_m
        .inverse()
        .compose(&frame.t_cb_m)
        .compose(&handeye.t_c_cb)
        .compose(t_o_c)
}

/// `T_O_C = T_C_CB⁻¹ T_CB_M⁻¹ T_OB_M T_O_OB`.
pub fn gt_object_pose(frame: &MocapFrame, handeye: &HandEye, offset: &Pose) -> Pose {
    handeye
        .t_c_cb
        .inverse()
        .compose(&frame.t_cb_m.inverse())
        .compose(&frame.t_ob_m)
        .compose(offset)
}

/// Offset averaged over several calibration frames: rotation as the principal
/// eigenvector of `Σ q qᵀ` (sign-invariant), translation as the arithmetic mean.
pub fn solve_object_offset_multi(samples: &[(MocapFrame, Pose)], handeye: &HandEye) -> Result<Pose> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no calibration frames".into()));
    }
    let offsets: Vec<Pose> = samples
        .iter()
        .map(|(f, t_o_c)| solve_object_offset(f, handeye, t_o_c))
        .collect();
    let mut m = Matrix4::<f64>::zeros();
    let mut t = Vec3::zeros();
    for o in &offsets {
        let q = o.rotation.wxyz();
        let v = nalgebra::Vector4::new(q[0], q[1], q[2], q[3]);
        m += v * v.transpose();
        t += o.translation;
    }
    let eig = m.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, &l)| if l > best.1 { (k, l) } else { best });
    let v = eig.eigenvectors.column(k);
    let mean = UnitQuaternion::from_quaternion(Quaternion::new(v[0], v[1], v[2], v[3]));
    let rotation = Rotation::from_wxyz(mean.w, mean.i, mean.j, mean.k)?
        .aligned_with(&offsets[0].rotation);
    Ok(Pose::new(rotation, t / offsets.len() as f64))
}

/// Ground-truth trajectory for every mocap frame.
pub fn gt_trajectory(frames: &[MocapFrame], handeye: &HandEye, offset: &Pose) -> Vec<(usize, Pose)> {
    frames
        .iter()
        .map(|f| (f.frame, gt_object_pose(f, handeye, offset)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::rotation_angle_between;
    use crate::se3::testing::random_pose;
    use crate::dataio::synth::add_pose_noise;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &Pose, b: &Pose, tol: f64) -> bool {
        rotation_angle_between(&a.rotation, &b.rotation) < tol && (a.translation - b.translation).norm() < tol
    }

    /// Rig with known offset: the object body and camera body move in the mocap world;
    /// the object pose in the camera follows from the chain.
    fn rig(seed: u64, n: usize) -> (HandEye, Pose, Vec<MocapFrame>, Vec<Pose>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let handeye = HandEye {
            t_c_cb: random_pose(&mut rng, 0.1),
        };
        let t_o_ob = random_pose(&mut rng, 0.05);
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        for k in 0..n {
            let t_ob_m = random_pose(&mut rng, 2.0);
            let t_cb_m = random_pose(&mut rng, 2.0);
            // T_O_C = T_C_CB⁻¹ T_CB_M⁻¹ T_OB_M T_O_OB built by transforming points
            let t_o_m = t_ob_m.compose(&t_o_ob);
            let t_c_m = t_cb_m.compose(&handeye.t_c_cb);
            truth.push(t_c_m.inverse().compose(&t_o_m));
            frames.push(MocapFrame { frame: k, t_ob_m, t_cb_m });
        }
        (handeye, t_o_ob, frames, truth)
    }

    #[test]
    fn identity_inputs() {
        let f = MocapFrame {
            frame: 0,
            t_ob_m: Pose::identity(),
            t_cb_m: Pose::identity(),
        };
        let he = HandEye {
            t_c_cb: Pose::identity(),
        };
        assert_eq!(solve_object_offset(&f, &he, &Pose::identity()), Pose::identity());
    }

    #[test]
    fn identity_world_gives_inverse_handeye() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let he = HandEye {
            t_c_cb: random_pose(&mut rng, 1.0),
        };
        let f = MocapFrame {
            frame: 0,
            t_ob_m: Pose::identity(),
            t_cb_m: Pose::identity(),
        };
        assert!(close(&gt_object_pose(&f, &he, &Pose::identity()), &he.t_c_cb.inverse(), 1e-12));
    }

    #[test]
    fn offset_satisfies_its_defining_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let f = MocapFrame {
                frame: 0,
                t_ob_m: random_pose(&mut rng, 2.0),
                t_cb_m: random_pose(&mut rng, 2.0),
            };
            let he = HandEye {
                t_c_cb: random_pose(&mut rng, 0.2),
            };
            let t_o_c = random_pose(&mut rng, 1.0);
            let off = solve_object_offset(&f, &he, &t_o_c);
            // T_OB_M T_O_OB = T_CB_M T_C_CB T_O_C
            let lhs = f.t_ob_m.compose(&off);
            let rhs = f.t_cb_m.compose(&he.t_c_cb).compose(&t_o_c);
            assert!(close(&lhs, &rhs, 1e-10));
            assert!(close(&gt_object_pose(&f, &he, &off), &t_o_c, 1e-10));
        }
    }

    #[test]
    fn synthetic_rig_recovery() {
        let (he, t_o_ob, frames, truth) = rig(3, 100);
        for (f, t) in frames.iter().zip(&truth) {
            assert!(close(&solve_object_offset(f, &he, t), &t_o_ob, 1e-10));
        }
        let off = solve_object_offset(&frames[17], &he, &truth[17]);
        for ((_, p), t) in gt_trajectory(&frames, &he, &off).iter().zip(&truth) {
            assert!(close(p, t, 1e-10));
        }
    }

    #[test]
    fn multi_frame_average() {
        let (he, t_o_ob, frames, truth) = rig(4, 40);
        let exact: Vec<(MocapFrame, Pose)> = frames.iter().copied().zip(truth.iter().copied()).collect();
        assert!(close(&solve_object_offset_multi(&exact, &he).unwrap(), &t_o_ob, 1e-10));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noisy: Vec<(MocapFrame, Pose)> = exact
            .iter()
            .map(|(f, t)| (*f, add_pose_noise(&mut rng, t, 0.002, 0.5f64.to_radians())))
            .collect();
        let avg = solve_object_offset_multi(&noisy, &he).unwrap();
        let single = solve_object_offset(&noisy[0].0, &he, &noisy[0].1);
        let err = |p: &Pose| rotation_angle_between(&p.rotation, &t_o_ob.rotation);
        assert!(err(&avg) < err(&single));
        assert!(solve_object_offset_multi(&[], &he).is_err());
    }
}
