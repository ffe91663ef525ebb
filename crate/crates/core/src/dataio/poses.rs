//! Pose trajectories: `frame,tx,ty,tz,qw,qx,qy,qz`, meters, quaternion w-first.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::se3::{Pose, Rotation, Vec3};

pub const POSE_HEADER: &str = "# frame,tx,ty,tz,qw,qx,qy,qz (meters; quaternion w-first)";

/// Norm deviation accepted silently; beyond it the quaternion is renormalized with a warning.
pub const QUAT_NORM_TOL: f64 = 1e-6;
/// Norm deviation beyond which a line is rejected.
pub const QUAT_NORM_REJECT: f64 = 1e-3;

/// One line of the pose format, without trailing newline.
pub fn format_pose_line(frame: usize, pose: &Pose) -> String {
    let t = pose.translation;
    let q = pose.rotation.wxyz();
    format!(
        "{frame},{},{},{},{},{},{},{}",
        t.x, t.y, t.z, q[0], q[1], q[2], q[3]
    )
}

pub fn format_poses(poses: &[(usize, Pose)]) -> String {
    let mut out = String::with_capacity(poses.len() * 120 + POSE_HEADER.len() + 1);
    out.push_str(POSE_HEADER);
    out.push('\n');
    for (frame, pose) in poses {
        let _ = writeln!(out, "{}", format_pose_line(*frame, pose));
    }
    out
}

pub fn write_poses(path: &Path, poses: &[(usize, Pose)]) -> Result<()> {
    std::fs::write(path, format_poses(poses)).map_err(|e| Error::io(path, e))
}

/// Parses pose text; `path` is used for error messages only.
pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<(usize, Pose)>> {
    let mut out: Vec<(usize, Pose)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 8 fields, found {}", fields.len()),
            ));
        }
        let frame: usize = fields[0]
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad frame index '{}'", fields[0])))?;
        let mut vals = [0.0f64; 7];
        for (k, f) in fields[1..].iter().enumerate() {
            vals[k] = f
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad number '{f}'")))?;
            if !vals[k].is_finite() {
                return Err(Error::parse(path, line_no, format!("non-finite value '{f}'")));
            }
        }
        let norm = (vals[3] * vals[3] + vals[4] * vals[4] + vals[5] * vals[5] + vals[6] * vals[6]).sqrt();
        let dev = (norm - 1.0).abs();
        if dev > QUAT_NORM_REJECT {
            return Err(Error::parse(
                path,
                line_no,
                format!("quaternion norm {norm} is not unit"),
            ));
        }
        if dev > QUAT_NORM_TOL {
            log::warn!(
                "{}:{line_no}: quaternion norm {norm} renormalized",
                path.display()
            );
        }
        let rotation = Rotation::from_wxyz(vals[3], vals[4], vals[5], vals[6])
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        if let Some((prev, _)) = out.last() {
            if frame <= *prev {
                return Err(Error::InvalidInput(format!(
                    "{}:{line_no}: frame {frame} does not follow frame {prev}",
                    path.display()
                )));
            }
        }
        out.push((frame, Pose::new(rotation, Vec3::new(vals[0], vals[1], vals[2]))));
    }
    Ok(out)
}

pub fn read_poses(path: &Path) -> Result<Vec<(usize, Pose)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::testing::random_pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p() -> &'static Path {
        Path::new("test.csv")
    }

    #[test]
    fn identity_line() {
        assert_eq!(format_pose_line(0, &Pose::identity()), "0,0,0,0,1,0,0,0");
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let poses: Vec<(usize, Pose)> = (0..1000).map(|k| (k, random_pose(&mut rng, 3.0))).collect();
        let back = parse_poses(&format_poses(&poses), p()).unwrap();
        assert_eq!(back.len(), poses.len());
        for ((fa, a), (fb, b)) in poses.iter().zip(&back) {
            assert_eq!(fa, fb);
            assert_eq!(a.translation, b.translation);
            assert_eq!(a.rotation.wxyz(), b.rotation.wxyz());
        }
    }

    #[test]
    fn non_unit_quaternion_rejected_with_line() {
        let text = "0,0,0,0,1,0,0,0\n1,0,0,0,0.9,0,0,0\n";
        match parse_poses(text, p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slightly_off_quaternion_renormalized() {
        let text = "0,0,0,0,1.00001,0,0,0\n";
        let poses = parse_poses(text, p()).unwrap();
        assert_eq!(poses[0].1.rotation.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn malformed_and_non_monotone() {
        match parse_poses("# h\n\n0,1,2\n", p()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_poses("0,x,0,0,1,0,0,0\n", p()),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_poses("3,0,0,0,1,0,0,0\n3,0,0,0,1,0,0,0\n", p()),
            Err(Error::InvalidInput(_))
        ));
    }
}
