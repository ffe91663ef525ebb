//! Intersection over union of oriented boxes, computed exactly by clipping one convex
//! polytope against the half-spaces of the other.

use crate::error::{Error, Result};
use crate::se3::{Pose, Vec3};

const PLANE_EPS: f64 = 1e-12;

/// Convex polytope as a list of planar faces.
#[derive(Clone, Debug)]
struct Polytope {
    faces: Vec<Vec<Vec3>>,
}

/// Corners of a box of size `extents` centred on the pose origin, in camera coordinates.
/// Bit `k` of the index selects the sign along axis `k`.
pub fn oriented_box_corners(pose: &Pose, extents: &Vec3) -> [Vec3; 8] {
    std::array::from_fn(|i| {
        let local = Vec3::new(
            if i & 1 == 0 { -0.5 } else { 0.5 } * extents.x,
            if i & 2 == 0 { -0.5 } else { 0.5 } * extents.y,
            if i & 4 == 0 { -0.5 } else { 0.5 } * extents.z,
        );
        pose.transform_point(&local)
    })
}

impl Polytope {
    fn from_box(pose: &Pose, extents: &Vec3) -> Self {
        let c = oriented_box_corners(pose, extents);
        let faces = [
            [0, 2, 6, 4],
            [1, 3, 7, 5],
            [0, 1, 5, 4],
            [2, 3, 7, 6],
            [0, 1, 3, 2],
            [4, 5, 7, 6],
        ]
        .iter()
        .map(|f| f.iter().map(|&k| c[k]).collect())
        .collect();
        Polytope { faces }
    }

    /// Keeps the part with `n·x <= d`.
    fn clip(&self, n: &Vec3, d: f64) -> Polytope {
        let mut faces = Vec::new();
        let mut cap = Vec::new();
        let mut face_on_plane = false;
        for face in &self.faces {
            let mut out = Vec::new();
            for k in 0..face.len() {
                let a = face[k];
                let b = face[(k + 1) % face.len()];
                let sa = n.dot(&a) - d;
                let sb = n.dot(&b) - d;
                if sa <= PLANE_EPS {
                    out.push(a);
                    if sa.abs() <= PLANE_EPS {
                        cap.push(a);
                    }
                }
                if (sa < -PLANE_EPS && sb > PLANE_EPS) || (sa > PLANE_EPS && sb < -PLANE_EPS) {
                    let p = a + (b - a) * (sa / (sa - sb));
                    out.push(p);
                    cap.push(p);
                }
            }
            if out.len() >= 3 {
                face_on_plane |= out.iter().all(|p| (n.dot(p) - d).abs() <= PLANE_EPS);
                faces.push(out);
            }
        }
        let cap = order_planar(dedup(cap), n);
        if cap.len() >= 3 && !face_on_plane {
            faces.push(cap);
        }
        Polytope { faces }
    }

    fn volume(&self) -> f64 {
        let verts: Vec<&Vec3> = self.faces.iter().flatten().collect();
        if verts.len() < 4 {
            return 0.0;
        }
        let c = verts.iter().fold(Vec3::zeros(), |s, v| s + *v) / verts.len() as f64;
        self.faces
            .iter()
            .map(|f| {
                (1..f.len() - 1)
                    .map(|k| ((f[0] - c).dot(&(f[k] - c).cross(&(f[k + 1] - c)))).abs() / 6.0)
                    .sum::<f64>()
            })
            .sum()
    }
}

fn dedup(points: Vec<Vec3>) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if !out.iter().any(|q| (q - p).norm() < 1e-10) {
            out.push(p);
        }
    }
    out
}

/// Sorts coplanar points by angle about their centroid in the plane with normal `n`.
fn order_planar(mut points: Vec<Vec3>, n: &Vec3) -> Vec<Vec3> {
    if points.len() < 3 {
        return points;
    }
    let c = points.iter().fold(Vec3::zeros(), |s, p| s + p) / points.len() as f64;
    let u = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&u).normalize();
    let v = n.cross(&u);
    points.sort_by(|a, b| {
        let ta = (a - c).dot(&v).atan2((a - c).dot(&u));
        let tb = (b - c).dot(&v).atan2((b - c).dot(&u));
        ta.total_cmp(&tb)
    });
    points
}

fn intersection_volume(a: &Pose, ea: &Vec3, b: &Pose, eb: &Vec3) -> f64 {
    let mut poly = Polytope::from_box(a, ea);
    let rot = b.rotation.matrix();
    for axis in 0..3 {
        let n = rot.column(axis).into_owned();
        let c = n.dot(&b.translation);
        for sign in [1.0, -1.0] {
            poly = poly.clip(&(n * sign), sign * c + 0.5 * eb[axis]);
            if poly.faces.is_empty() {
                return 0.0;
            }
        }
    }
    poly.volume()
}

/// IoU of two oriented boxes. Symmetric in its arguments.
pub fn oriented_box_iou(a: &Pose, ea: &Vec3, b: &Pose, eb: &Vec3) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput("non-finite box pose".into()));
    }
    if ea.iter().chain(eb.iter()).any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput("box extents must be positive".into()));
    }
    let inter = 0.5 * (intersection_volume(a, ea, b, eb) + intersection_volume(b, eb, a, ea));
    let va = ea.x * ea.y * ea.z;
    let vb = eb.x * eb.y * eb.z;
    let inter = inter.clamp(0.0, va.min(vb));
    Ok(inter / (va + vb - inter))
}
