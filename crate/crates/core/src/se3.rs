//! SO(3)/SE(3) arithmetic on unit quaternions.
//!
//! Conventions used by every module in this crate:
//!
//! * Quaternions are stored and serialized in `(w, x, y, z)` order.
//! * A [`Pose`] `T` maps object-local coordinates to camera coordinates: `x_cam = T * x_obj`.
//! * `a * b` (or [`Pose::compose`]) maps `x -> a(b(x))`.
//! * Tangent vectors are ordered `[rho, phi]` (translation first, rotation second).
//! * Perturbations are applied on the right, `T exp(xi)`, unless a function says otherwise.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Matrix6, Quaternion, UnitQuaternion, Vector3, Vector6};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat6 = Matrix6<f64>;

/// Below this rotation angle the exp/log coefficients switch to their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Below this angle the SE(3) Jacobian coefficients (θ⁻⁴, θ⁻⁵ denominators) use series.
const JACOBIAN_SMALL_ANGLE: f64 = 1e-2;

/// Squared-norm deviation above which a quaternion is renormalized.
const RENORM_EPS: f64 = 1e-14;

/// Skew-symmetric matrix `[v]x` with `[v]x w = v x w`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// A rotation stored as a unit quaternion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation(UnitQuaternion<f64>);

impl Default for Rotation {
    fn default() -> Self {
        Self::identity()
    }
}

impl Rotation {
    pub fn identity() -> Self {
        Rotation(UnitQuaternion::identity())
    }

    /// Builds a rotation from `(w, x, y, z)`, renormalizing if needed.
    pub fn from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        if !q.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite quaternion ({w}, {x}, {y}, {z})"
            )));
        }
        if q.norm_squared() < 1e-300 {
            return Err(Error::InvalidArgument("zero quaternion".into()));
        }
        Ok(Self::from_quaternion(q))
    }

    /// Wraps `q`, renormalizing only when it is measurably off the unit sphere.
    pub(crate) fn from_quaternion(q: Quaternion<f64>) -> Self {
        let n2 = q.norm_squared();
        if (n2 - 1.0).abs() > RENORM_EPS {
            Rotation(UnitQuaternion::new_unchecked(q / n2.sqrt()))
        } else {
            Rotation(UnitQuaternion::new_unchecked(q))
        }
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.0.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn quaternion(&self) -> &UnitQuaternion<f64> {
        &self.0
    }

    /// Rotation of `phi.norm()` radians about `phi`.
    pub fn exp(phi: &Vec3) -> Self {
        let theta2 = phi.norm_squared();
        let theta = theta2.sqrt();
        let (real, imag_scale) = if theta < SMALL_ANGLE {
            (1.0 - theta2 / 8.0, 0.5 - theta2 / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        Self::from_quaternion(Quaternion::new(
            real,
            imag_scale * phi.x,
            imag_scale * phi.y,
            imag_scale * phi.z,
        ))
    }

    /// Axis-angle vector with angle in `[0, π]`.
    ///
    /// The quaternion is flipped into the `w >= 0` hemisphere first. At exactly π
    /// (`w == 0`) the sign of the result follows the stored vector part.
    pub fn log(&self) -> Vec3 {
        let q = self.0.quaternion();
        let (w, v) = if q.w < 0.0 {
            (-q.w, -q.imag())
        } else {
            (q.w, q.imag())
        };
        let n = v.norm();
        if n < SMALL_ANGLE {
            // 2 atan(n / w) / n ≈ (2 / w) (1 - n² / (3 w²))
            let scale = 2.0 / w * (1.0 - n * n / (3.0 * w * w));
            v * scale
        } else {
            v * (2.0 * n.atan2(w) / n)
        }
    }

    pub fn inverse(&self) -> Self {
        Rotation(self.0.inverse())
    }

    pub fn matrix(&self) -> Mat3 {
        *self.0.to_rotation_matrix().matrix()
    }

    /// Converts a rotation matrix using the largest-diagonal (Shepperd) branch, which stays
    /// well conditioned for angles near π.
    pub fn from_matrix(m: &Mat3) -> Self {
        let trace = m.trace();
        let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        let q = if trace >= diag[0] && trace >= diag[1] && trace >= diag[2] {
            let s = 2.0 * (1.0 + trace).sqrt();
            Quaternion::new(
                0.25 * s,
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            )
        } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
            let s = 2.0 * (1.0 + diag[0] - diag[1] - diag[2]).sqrt();
            Quaternion::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            )
        } else if diag[1] >= diag[2] {
            let s = 2.0 * (1.0 + diag[1] - diag[0] - diag[2]).sqrt();
            Quaternion::new(
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            )
        } else {
            let s = 2.0 * (1.0 + diag[2] - diag[0] - diag[1]).sqrt();
            Quaternion::new(
                (m[(1, 0)] - m[(0, 1)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            )
        };
        Self::from_quaternion(q)
    }

    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Quaternion inner product; negative means the two are in opposite hemispheres.
    pub fn dot(&self, other: &Rotation) -> f64 {
        self.0.coords.dot(&other.0.coords)
    }

    /// The same rotation expressed by `-q`.
    pub fn negated(&self) -> Self {
        Rotation(UnitQuaternion::new_unchecked(-self.0.into_inner()))
    }

    /// Returns `self` or its negation, whichever lies in the hemisphere of `reference`.
    pub fn aligned_with(&self, reference: &Rotation) -> Self {
        if self.dot(reference) < 0.0 {
            self.negated()
        } else {
            *self
        }
    }

    pub fn angle(&self) -> f64 {
        let q = self.0.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }
}

impl Mul for Rotation {
    type Output = Rotation;

    fn mul(self, rhs: Rotation) -> Rotation {
        Rotation::from_quaternion(self.0.into_inner() * rhs.0.into_inner())
    }
}

impl Mul<Vec3> for Rotation {
    type Output = Vec3;

    fn mul(self, rhs: Vec3) -> Vec3 {
        self.rotate(&rhs)
    }
}

/// Geodesic distance on SO(3)/±1 in radians, in `[0, π]`.
///
/// Computed as `2 atan2(|v|, |w|)` of the relative quaternion.
pub fn rotation_angle_between(a: &Rotation, b: &Rotation) -> f64 {
    (a.inverse() * *b).angle()
}

/// Element of se(3), `[rho, phi]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    /// Translational part, meters.
    pub rho: Vec3,
    /// Rotational part (axis-angle), radians.
    pub phi: Vec3,
}

impl Twist {
    pub fn new(rho: Vec3, phi: Vec3) -> Self {
        Twist { rho, phi }
    }

    pub fn zero() -> Self {
        Twist::default()
    }

    pub fn from_vector(v: &Vec6) -> Self {
        Twist {
            rho: v.fixed_rows::<3>(0).into_owned(),
            phi: v.fixed_rows::<3>(3).into_owned(),
        }
    }

    pub fn to_vector(&self) -> Vec6 {
        let mut v = Vec6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        v.fixed_rows_mut::<3>(3).copy_from(&self.phi);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.rho.iter().chain(self.phi.iter()).all(|c| c.is_finite())
    }

    pub fn exp(&self) -> Pose {
        Pose {
            rotation: Rotation::exp(&self.phi),
            translation: so3_left_jacobian(&self.phi) * self.rho,
        }
    }
}

/// A rigid transform from object-local to camera coordinates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Pose {
    pub rotation: Rotation,
    /// Meters.
    pub translation: Vec3,
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vec3) -> Self {
        Pose {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose::default()
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Pose {
            rotation: Rotation::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation) -> Self {
        Pose {
            rotation,
            translation: Vec3::zeros(),
        }
    }

    /// `self ∘ other`: maps `x -> self(other(x))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose {
            rotation: r_inv,
            translation: -r_inv.rotate(&self.translation),
        }
    }

    /// `self⁻¹ ∘ other`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation.rotate(p) + self.translation
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn log(&self) -> Twist {
        let phi = self.rotation.log();
        Twist {
            rho: so3_left_jacobian_inverse(&phi) * self.translation,
            phi,
        }
    }

    /// Adjoint in `[rho, phi]` ordering: `T exp(xi) T⁻¹ = exp(Ad_T xi)`.
    pub fn adjoint(&self) -> Mat6 {
        let r = self.rotation.matrix();
        let mut ad = Mat6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(skew(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad
    }

    /// Retraction `self ∘ exp(delta)`.
    pub fn retract(&self, delta: &Vec6) -> Pose {
        self.compose(&Twist::from_vector(delta).exp())
    }

    /// `(rotation angle, translation norm)` of `self⁻¹ other`.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        (
            rotation_angle_between(&self.rotation, &other.rotation),
            (self.translation - other.translation).norm(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.translation.iter().all(|c| c.is_finite())
            && self.rotation.wxyz().iter().all(|c| c.is_finite())
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

/// SE(3) exponential map. Rejects non-finite twists.
pub fn exp_se3(xi: &Twist) -> Result<Pose> {
    if !xi.is_finite() {
        return Err(Error::InvalidArgument(format!("non-finite twist {xi:?}")));
    }
    Ok(xi.exp())
}

/// SE(3) logarithm, total on valid poses.
pub fn log_se3(p: &Pose) -> Twist {
    p.log()
}

pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(a: &Pose) -> Pose {
    a.inverse()
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let half_sin = (0.5 * theta).sin();
        (
            2.0 * half_sin * half_sin / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Mat3::identity() + k * a + k * k * b
}

pub fn so3_left_jacobian_inverse(phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(phi);
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta2
    };
    Mat3::identity() - k * 0.5 + k * k * c
}

pub fn so3_right_jacobian(phi: &Vec3) -> Mat3 {
    so3_left_jacobian(&-phi)
}

pub fn so3_right_jacobian_inverse(phi: &Vec3) -> Mat3 {
    so3_left_jacobian_inverse(&-phi)
}

/// The off-diagonal block `Q(rho, phi)` of the SE(3) left Jacobian.
fn se3_q_block(rho: &Vec3, phi: &Vec3) -> Mat3 {
    let theta2 = phi.norm_squared();
    let theta = theta2.sqrt();
    let (c1, c2, c3) = if theta < JACOBIAN_SMALL_ANGLE {
        let theta4 = theta2 * theta2;
        let c1 = 1.0 / 6.0 - theta2 / 120.0 + theta4 / 5040.0;
        let c2 = -1.0 / 24.0 + theta2 / 720.0 - theta4 / 40320.0;
        let c4 = -1.0 / 120.0 + theta2 / 5040.0 - theta4 / 362880.0;
        (c1, c2, 0.5 * (c2 - 3.0 * c4))
    } else {
        let (s, c) = theta.sin_cos();
        let theta3 = theta2 * theta;
        let theta4 = theta2 * theta2;
        let theta5 = theta4 * theta;
        let c1 = (theta - s) / theta3;
        let c2 = (1.0 - 0.5 * theta2 - c) / theta4;
        let c4 = (theta - s - theta3 / 6.0) / theta5;
        (c1, c2, 0.5 * (c2 - 3.0 * c4))
    };
    let p = skew(phi);
    let r = skew(rho);
    let prp = p * r * p;
    r * 0.5 + (p * r + r * p + prp) * c1 - (p * p * r + r * p * p - prp * 3.0) * c2
        - (prp * p + p * prp) * c3
}

/// Left Jacobian of SE(3) in `[rho, phi]` ordering.
pub fn se3_left_jacobian(xi: &Twist) -> Mat6 {
    let j = so3_left_jacobian(&xi.phi);
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&se3_q_block(&xi.rho, &xi.phi));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out
}

pub fn se3_left_jacobian_inverse(xi: &Twist) -> Mat6 {
    let j_inv = so3_left_jacobian_inverse(&xi.phi);
    let q = se3_q_block(&xi.rho, &xi.phi);
    let mut out = Mat6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_inv);
    out.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&(-j_inv * q * j_inv));
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_inv);
    out
}

/// Right Jacobian of SE(3): `exp(xi + d) ≈ exp(xi) exp(J_r(xi) d)`.
pub fn se3_right_jacobian(xi: &Twist) -> Mat6 {
    se3_left_jacobian(&Twist::new(-xi.rho, -xi.phi))
}

pub fn se3_right_jacobian_inverse(xi: &Twist) -> Mat6 {
    se3_left_jacobian_inverse(&Twist::new(-xi.rho, -xi.phi))
}

#[cfg(test)]
pub(crate) mod testing {
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal, UnitSphere};

    use super::*;

    pub fn random_rotation<R: Rng>(rng: &mut R) -> Rotation {
        let w: f64 = StandardNormal.sample(rng);
        let x: f64 = StandardNormal.sample(rng);
        let y: f64 = StandardNormal.sample(rng);
        let z: f64 = StandardNormal.sample(rng);
        Rotation::from_wxyz(w, x, y, z).unwrap()
    }

    pub fn random_pose<R: Rng>(rng: &mut R, scale: f64) -> Pose {
        let t = Vec3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        );
        Pose::new(random_rotation(rng), t)
    }

    /// Twist with rotation angle uniform in `[0, max_angle)`.
    pub fn random_twist<R: Rng>(rng: &mut R, max_angle: f64, scale: f64) -> Twist {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        let angle = rng.random_range(0.0..max_angle);
        Twist::new(
            Vec3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            ),
            Vec3::from(axis) * angle,
        )
    }
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, PI};

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::testing::*;
    use super::*;

    /// Independent oracle: 4×4 matrix exponential of the se(3) hat matrix by
    /// scaling-and-squaring with a truncated Taylor series.
    fn expm_oracle(xi: &Twist) -> Matrix4<f64> {
        let mut hat = Matrix4::zeros();
        hat.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.phi));
        hat.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho);
        let norm = hat.abs().max().max(1e-300);
        let squarings = (norm / 0.1).log2().ceil().max(0.0) as i32;
        let scaled = hat / 2f64.powi(squarings);
        let mut term = Matrix4::identity();
        let mut sum = Matrix4::identity();
        for k in 1..30 {
            term = term * scaled / k as f64;
            sum += term;
        }
        for _ in 0..squarings {
            sum = sum * sum;
        }
        sum
    }

    fn assert_pose_close(a: &Pose, b: &Pose, tol: f64) {
        let (rot, trans) = a.distance(b);
        assert!(rot < tol && trans < tol, "poses differ: rot {rot}, trans {trans}");
    }

    #[test]
    fn zero_twist_is_identity() {
        let p = exp_se3(&Twist::zero()).unwrap();
        assert_eq!(p.rotation.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.translation, Vec3::zeros());
    }

    #[test]
    fn quarter_turn_about_z() {
        let p = exp_se3(&Twist::new(Vec3::zeros(), Vec3::new(0.0, 0.0, FRAC_PI_2))).unwrap();
        let x = p.transform_point(&Vec3::x());
        assert!((x - Vec3::y()).norm() < 1e-15);
        assert_eq!(p.translation, Vec3::zeros());
    }

    #[test]
    fn non_finite_twist_is_rejected() {
        let xi = Twist::new(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zeros());
        assert!(matches!(exp_se3(&xi), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn exp_matches_matrix_exponential_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let xi = random_twist(&mut rng, PI - 1e-3, 2.0);
            let ours = xi.exp().matrix();
            let oracle = expm_oracle(&xi);
            assert!((ours - oracle).abs().max() < 1e-10, "{ours} vs {oracle}");
            let back = ours_log(&xi);
            assert!((back.to_vector() - xi.to_vector()).abs().max() < 1e-9);
        }
    }

    fn ours_log(xi: &Twist) -> Twist {
        log_se3(&exp_se3(xi).unwrap())
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(log_se3(&Pose::identity()).to_vector(), Vec6::zeros());
    }

    #[test]
    fn log_at_half_turn_about_x() {
        let p = Pose::from_rotation(Rotation::from_wxyz(0.0, 1.0, 0.0, 0.0).unwrap());
        let xi = log_se3(&p);
        assert!((xi.phi - Vec3::new(PI, 0.0, 0.0)).norm() < 1e-15);
        // the opposite sign of the stored vector part gives the opposite (equivalent) twist
        let p = Pose::from_rotation(Rotation::from_wxyz(0.0, -1.0, 0.0, 0.0).unwrap());
        assert!((log_se3(&p).phi - Vec3::new(-PI, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn log_near_half_turn_from_matrix() {
        let phi = Vec3::new(1.0, -2.0, 0.5).normalize() * (PI - 1e-7);
        let r = Rotation::from_matrix(&Rotation::exp(&phi).matrix());
        assert!((r.log() - phi).norm() < 1e-8);
    }

    #[test]
    fn exp_log_round_trip_random_poses() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = random_pose(&mut rng, 3.0);
            assert_pose_close(&exp_se3(&log_se3(&p)).unwrap(), &p, 1e-9);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        for &angle in &[0.5 * SMALL_ANGLE, 2.0 * SMALL_ANGLE, 1e-6, 1e-3] {
            let xi = Twist::new(Vec3::new(0.1, -0.2, 0.3), Vec3::new(1.0, 2.0, -1.0).normalize() * angle);
            let oracle = expm_oracle(&xi);
            assert!((xi.exp().matrix() - oracle).abs().max() < 1e-14);
            assert!((xi.exp().log().to_vector() - xi.to_vector()).abs().max() < 1e-14);
        }
    }

    #[test]
    fn composition_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng, 1.0);
        assert_eq!(compose(&p, &Pose::identity()), p);
        assert_pose_close(&compose(&p, &inverse(&p)), &Pose::identity(), 1e-10);
        let q = random_pose(&mut rng, 1.0);
        let x = Vec3::new(0.3, -0.1, 2.0);
        let lhs = compose(&p, &q).transform_point(&x);
        let rhs = p.transform_point(&q.transform_point(&x));
        assert!((lhs - rhs).norm() < 1e-14);
    }

    #[test]
    fn double_cover_distance_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = random_rotation(&mut rng);
        assert!(rotation_angle_between(&r, &r.negated()) < 1e-15);
    }

    #[test]
    fn adjoint_conjugates_exponentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let t = random_pose(&mut rng, 1.0);
        let xi = random_twist(&mut rng, 1.0, 0.5);
        let lhs = t.compose(&xi.exp()).compose(&t.inverse());
        let rhs = Twist::from_vector(&(t.adjoint() * xi.to_vector())).exp();
        assert_pose_close(&lhs, &rhs, 1e-12);
    }

    #[test]
    fn right_jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let xi = random_twist(&mut rng, 2.5, 1.0);
            let jr = se3_right_jacobian(&xi);
            let base = xi.exp();
            let h = 1e-6;
            for k in 0..6 {
                let mut d = Vec6::zeros();
                d[k] = h;
                let plus = base.inverse().compose(&Twist::from_vector(&(xi.to_vector() + d)).exp()).log();
                let minus = base.inverse().compose(&Twist::from_vector(&(xi.to_vector() - d)).exp()).log();
                let col = (plus.to_vector() - minus.to_vector()) / (2.0 * h);
                assert!((col - jr.column(k)).abs().max() < 1e-7, "col {k}: {col} vs {}", jr.column(k));
            }
            let inv = se3_right_jacobian_inverse(&xi);
            assert!((inv * jr - Mat6::identity()).abs().max() < 1e-10);
        }
    }

    #[test]
    fn jacobian_series_branch_matches_closed_form() {
        let rho = Vec3::new(0.3, -0.7, 0.2);
        let axis = Vec3::new(0.2, 0.5, -1.0).normalize();
        let below = se3_left_jacobian(&Twist::new(rho, axis * (JACOBIAN_SMALL_ANGLE * 0.999)));
        let above = se3_left_jacobian(&Twist::new(rho, axis * (JACOBIAN_SMALL_ANGLE * 1.001)));
        assert!((below - above).abs().max() < 1e-4);
    }

    #[test]
    fn renormalizes_off_unit_input() {
        let r = Rotation::from_wxyz(2.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(r.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        assert!(Rotation::from_wxyz(0.0, 0.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn group_axioms(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_pose(&mut rng, 2.0);
            let b = random_pose(&mut rng, 2.0);
            let c = random_pose(&mut rng, 2.0);
            let lhs = a.compose(&b).compose(&c);
            let rhs = a.compose(&b.compose(&c));
            let (dr, dt) = lhs.distance(&rhs);
            prop_assert!(dr < 1e-10 && dt < 1e-10);
            let (dr, dt) = a.compose(&a.inverse()).distance(&Pose::identity());
            prop_assert!(dr < 1e-10 && dt < 1e-10);
            let q = a.rotation.wxyz();
            let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-12);
        }

        #[test]
        fn rotation_distance_is_a_metric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let c = random_rotation(&mut rng);
            let ab = rotation_angle_between(&a, &b);
            prop_assert!((ab - rotation_angle_between(&b, &a)).abs() < 1e-12);
            prop_assert!(rotation_angle_between(&a, &a) < 1e-12);
            prop_assert!((0.0..=PI).contains(&ab));
            let bc = rotation_angle_between(&b, &c);
            let ac = rotation_angle_between(&a, &c);
            prop_assert!(ac <= ab + bc + 1e-12);
        }
    }
}
