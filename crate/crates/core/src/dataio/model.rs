//! Object model point samples: ASCII PLY (vertex x y z) or a plain `x y z` list, meters.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::se3::Vec3;

/// Above this many points the diameter search switches to the pruned scan.
pub const BRUTE_FORCE_DIAMETER_LIMIT: usize = 5000;

/// Points of the object model in object-local coordinates with their diameter.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelPoints {
    points: Vec<Vec3>,
    diameter: f64,
}

impl ModelPoints {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidModel("no points".into()));
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidModel("non-finite coordinate".into()));
        }
        let diameter = diameter(&points);
        if diameter <= 0.0 {
            return Err(Error::InvalidModel("all points coincide".into()));
        }
        Ok(ModelPoints { points, diameter })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Largest pairwise distance, meters.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

pub fn brute_force_diameter(points: &[Vec3]) -> f64 {
    let mut best2 = 0.0f64;
    for (k, a) in points.iter().enumerate() {
        for b in &points[k + 1..] {
            best2 = best2.max((a - b).norm_squared());
        }
    }
    best2.sqrt()
}

/// Exact diameter. Large clouds are scanned in order of decreasing distance from the
/// centroid, stopping once `r_a + r_b` cannot beat the best pair found.
pub fn diameter(points: &[Vec3]) -> f64 {
    if points.len() <= BRUTE_FORCE_DIAMETER_LIMIT {
        return brute_force_diameter(points);
    }
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / points.len() as f64;
    let mut order: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(k, p)| ((p - centroid).norm(), k))
        .collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best = 0.0f64;
    for (ka, &(ra, a)) in order.iter().enumerate() {
        if 2.0 * ra <= best {
            break;
        }
        for &(rb, b) in &order[ka + 1..] {
            if ra + rb <= best {
                break;
            }
            best = best.max((points[a] - points[b]).norm());
        }
    }
    best
}

/// Parses either format; PLY is detected by its magic line.
pub fn parse_model_points(text: &str, path: &Path) -> Result<ModelPoints> {
    let mut lines = text.lines().enumerate().peekable();
    let is_ply = lines.peek().is_some_and(|(_, l)| l.trim() == "ply");
    let mut points = Vec::new();
    let mut vertex_count: Option<usize> = None;
    let mut xyz_cols = [0usize, 1, 2];
    if is_ply {
        lines.next();
        let mut props: Vec<String> = Vec::new();
        let mut in_vertex = false;
        loop {
            let Some((idx, raw)) = lines.next() else {
                return Err(Error::parse(path, text.lines().count(), "missing end_header"));
            };
            let toks: Vec<&str> = raw.split_whitespace().collect();
            match toks.as_slice() {
                ["format", fmt, ..] if *fmt != "ascii" => {
                    return Err(Error::Format {
                        path: path.to_path_buf(),
                        message: format!("PLY format '{fmt}' (only ascii is supported)"),
                    })
                }
                ["element", "vertex", n] => {
                    vertex_count = Some(
                        n.parse()
                            .map_err(|_| Error::parse(path, idx + 1, "bad vertex count"))?,
                    );
                    in_vertex = true;
                }
                ["element", ..] => in_vertex = false,
                ["property", .., name] if in_vertex => props.push(name.to_string()),
                ["end_header"] => break,
                _ => {}
            }
        }
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            xyz_cols[k] = props.iter().position(|p| p == axis).ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                message: format!("PLY vertex has no '{axis}' property"),
            })?;
        }
    }
    for (idx, raw) in lines {
        if vertex_count.is_some_and(|n| points.len() == n) {
            break;
        }
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).collect();
        let need = xyz_cols.iter().max().unwrap() + 1;
        if toks.len() < need || (!is_ply && toks.len() != 3) {
            return Err(Error::parse(path, idx + 1, "expected x y z"));
        }
        let mut p = Vec3::zeros();
        for (k, &c) in xyz_cols.iter().enumerate() {
            p[k] = toks[c]
                .parse()
                .map_err(|_| Error::parse(path, idx + 1, format!("bad coordinate '{}'", toks[c])))?;
        }
        points.push(p);
    }
    if let Some(n) = vertex_count {
        if points.len() != n {
            return Err(Error::parse(
                path,
                text.lines().count(),
                format!("expected {n} vertices, found {}", points.len()),
            ));
        }
    }
    ModelPoints::new(points)
}

pub fn read_model_points(path: &Path) -> Result<ModelPoints> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_model_points(&text, path)
}

/// Writes the plain `x y z` list.
pub fn write_model_points(path: &Path, points: &[Vec3]) -> Result<()> {
    let mut out = String::new();
    for p in points {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_points() {
        let m = ModelPoints::new(vec![Vec3::zeros(), Vec3::new(0.1, 0.0, 0.0)]).unwrap();
        assert_eq!(m.diameter(), 0.1);
    }

    #[test]
    fn cube_corners() {
        let pts: Vec<Vec3> = (0..8)
            .map(|k| Vec3::new((k & 1) as f64, ((k >> 1) & 1) as f64, ((k >> 2) & 1) as f64))
            .collect();
        assert!((ModelPoints::new(pts).unwrap().diameter() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_models_rejected() {
        assert!(matches!(ModelPoints::new(vec![]), Err(Error::InvalidModel(_))));
        let same = vec![Vec3::new(1.0, 2.0, 3.0); 4];
        assert!(matches!(ModelPoints::new(same), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn pruned_diameter_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for cloud in 0..10 {
            let n = 5200 + 100 * cloud;
            let stretch = Vec3::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), 1.0);
            let pts: Vec<Vec3> = (0..n)
                .map(|_| {
                    let p = Vec3::new(
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                        rng.random_range(-1.0..1.0),
                    );
                    p.component_mul(&stretch)
                })
                .collect();
            assert_eq!(diameter(&pts), brute_force_diameter(&pts));
        }
    }

    #[test]
    fn parses_ply_and_xyz() {
        let ply = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float y\nproperty float x\nproperty float z\nelement face 0\nproperty list uchar int vertex_indices\nend_header\n1 0 0\n0 2 0\n";
        let m = parse_model_points(ply, Path::new("m.ply")).unwrap();
        assert_eq!(m.points(), &[Vec3::new(0.0, 1.0, 0.0), Vec3::new(2.0, 0.0, 0.0)]);
        let xyz = "# pts\n0 0 0\n0.1 0 0\n";
        assert_eq!(parse_model_points(xyz, Path::new("m.xyz")).unwrap().diameter(), 0.1);
        let bin = "ply\nformat binary_little_endian 1.0\nend_header\n";
        assert!(matches!(parse_model_points(bin, Path::new("b.ply")), Err(Error::Format { .. })));
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.xyz");
        let pts = vec![Vec3::new(0.1, -0.25, 1.0 / 3.0), Vec3::new(2.0, 0.0, -1e-9)];
        write_model_points(&path, &pts).unwrap();
        assert_eq!(read_model_points(&path).unwrap().points(), pts.as_slice());
    }
}
