//! Relative pose estimates:
//! `i,j,tx,ty,tz,qw,qx,qy,qz,<21 upper-triangular information entries, row-major>,<inlier indices separated by spaces>`.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::relpose::RelativePoseEstimate;
use crate::se3::{Mat6, Pose, Rotation, Vec3};

pub const RELATIVE_HEADER: &str =
    "# i,j,tx,ty,tz,qw,qx,qy,qz,info upper triangle (21, row-major, [rho,phi]),inliers";

const FIELDS: usize = 2 + 7 + 21 + 1;

pub fn format_relatives(estimates: &[RelativePoseEstimate]) -> String {
    let mut out = String::from(RELATIVE_HEADER);
    out.push('\n');
    for e in estimates {
        let t = e.pose.translation;
        let q = e.pose.rotation.wxyz();
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            e.i, e.j, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        );
        for r in 0..6 {
            for c in r..6 {
                let _ = write!(out, ",{}", e.information[(r, c)]);
            }
        }
        out.push(',');
        let idx: Vec<String> = e.inliers.iter().map(|k| k.to_string()).collect();
        out.push_str(&idx.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_relatives(text: &str, path: &Path) -> Result<Vec<RelativePoseEstimate>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != FIELDS {
            return Err(Error::parse(path, line_no, format!("expected {FIELDS} fields, found {}", f.len())));
        }
        let int = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::parse(path, line_no, format!("bad index '{s}'")))
        };
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad number '{s}'")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, line_no, "non-finite value"))
            }
        };
        let (i, j) = (int(f[0])?, int(f[1])?);
        if i == j {
            return Err(Error::parse(path, line_no, "relative edge joins a frame to itself"));
        }
        let t = Vec3::new(num(f[2])?, num(f[3])?, num(f[4])?);
        let q = [num(f[5])?, num(f[6])?, num(f[7])?, num(f[8])?];
        let norm = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > crate::dataio::poses::QUAT_NORM_REJECT {
            return Err(Error::parse(path, line_no, format!("quaternion norm {norm} is not unit")));
        }
        let rotation = Rotation::from_wxyz(q[0], q[1], q[2], q[3])
            .map_err(|e| Error::parse(path, line_no, e.to_string()))?;
        let mut information = Mat6::zeros();
        let mut k = 9;
        for r in 0..6 {
            for c in r..6 {
                let v = num(f[k])?;
                information[(r, c)] = v;
                information[(c, r)] = v;
                k += 1;
            }
        }
        let inliers = f[k]
            .split_whitespace()
            .map(int)
            .collect::<Result<Vec<usize>>>()?;
        out.push(RelativePoseEstimate {
            i,
            j,
            pose: Pose::new(rotation, t),
            inliers,
            information,
        });
    }
    Ok(out)
}

pub fn read_relatives(path: &Path) -> Result<Vec<RelativePoseEstimate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_relatives(&text, path)
}

pub fn write_relatives(path: &Path, estimates: &[RelativePoseEstimate]) -> Result<()> {
    std::fs::write(path, format_relatives(estimates)).map_err(|e| Error::io(path, e))
}
