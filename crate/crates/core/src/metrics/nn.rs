//! Exact nearest-neighbor queries over a fixed point set.
//!
//! Small sets are scanned directly; larger ones go through a uniform grid searched in
//! growing shells until no unvisited cell can hold a closer point.

use crate::se3::Vec3;

/// Point counts at or below this are scanned without a grid.
pub const BRUTE_FORCE_LIMIT: usize = 2000;

pub struct NearestNeighbors<'a> {
    points: &'a [Vec3],
    grid: Option<Grid>,
}

struct Grid {
    origin: Vec3,
    cell: f64,
    dims: [usize; 3],
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> NearestNeighbors<'a> {
    pub fn new(points: &'a [Vec3]) -> Self {
        let grid = (points.len() > BRUTE_FORCE_LIMIT).then(|| Grid::build(points));
        NearestNeighbors { points, grid }
    }

    /// `(index, distance)` of the closest point. Panics on an empty set.
    pub fn nearest(&self, q: &Vec3) -> (usize, f64) {
        assert!(!self.points.is_empty(), "nearest neighbor of an empty set");
        match &self.grid {
            None => brute_force(self.points, q),
            Some(g) => g.nearest(self.points, q),
        }
    }
}

pub fn brute_force(points: &[Vec3], q: &Vec3) -> (usize, f64) {
    let (k, d2) = points
        .iter()
        .enumerate()
        .map(|(k, p)| (k, (p - q).norm_squared()))
        .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b });
    (k, d2.sqrt())
}

impl Grid {
    fn build(points: &[Vec3]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let span = hi - lo;
        let volume_side = (span.x.max(1e-9) * span.y.max(1e-9) * span.z.max(1e-9)).cbrt();
        // about two points per cell for volumetric sets; surface sets get denser cells
        let cell = (volume_side * (2.0 / points.len() as f64).cbrt())
            .max(span.max() / 256.0)
            .max(1e-9);
        let dims = [0, 1, 2].map(|a| ((span[a] / cell).floor() as usize + 1).max(1));
        let index = |p: &Vec3| -> usize {
            let c = [0, 1, 2].map(|a| (((p[a] - lo[a]) / cell) as usize).min(dims[a] - 1));
            (c[2] * dims[1] + c[1]) * dims[0] + c[0]
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0usize; ncells + 1];
        let cells: Vec<usize> = points.iter().map(index).collect();
        for &c in &cells {
            counts[c + 1] += 1;
        }
        for k in 0..ncells {
            counts[k + 1] += counts[k];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (k, &c) in cells.iter().enumerate() {
            order[fill[c]] = k;
            fill[c] += 1;
        }
        Grid {
            origin: lo,
            cell,
            dims,
            starts: counts,
            order,
        }
    }

    fn nearest(&self, points: &[Vec3], q: &Vec3) -> (usize, f64) {
        let rel = (q - self.origin) / self.cell;
        let home = [0, 1, 2].map(|a| rel[a].floor().clamp(0.0, (self.dims[a] - 1) as f64) as i64);
        // distance from q to the grid box
        let outside = [0, 1, 2]
            .map(|a| (-rel[a]).max(rel[a] - self.dims[a] as f64).max(0.0) * self.cell);
        let outside = Vec3::new(outside[0], outside[1], outside[2]).norm();
        let max_r = *self.dims.iter().max().unwrap() as i64;
        let mut best = (usize::MAX, f64::INFINITY);
        for r in 0..=max_r {
            // a ring-r cell is (r - 1) cells away along one axis, on top of the gap to the grid
            let gap = (r - 1).max(0) as f64 * self.cell;
            if best.1.is_finite() && outside * outside + gap * gap > best.1 {
                break;
            }
            let lo = [0, 1, 2].map(|a| (home[a] - r).max(0));
            let hi = [0, 1, 2].map(|a| (home[a] + r).min(self.dims[a] as i64 - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    let shell = (z - home[2]).abs() == r || (y - home[1]).abs() == r;
                    let xs: Vec<i64> = if shell {
                        (lo[0]..=hi[0]).collect()
                    } else {
                        [home[0] - r, home[0] + r]
                            .into_iter()
                            .filter(|&x| x >= 0 && x < self.dims[0] as i64)
                            .collect()
                    };
                    for x in xs {
                        self.scan_cell(points, q, [x, y, z], &mut best);
                    }
                }
            }
            if (0..3).all(|a| lo[a] == 0 && hi[a] == self.dims[a] as i64 - 1) {
                break;
            }
        }
        (best.0, best.1.sqrt())
    }

    fn scan_cell(&self, points: &[Vec3], q: &Vec3, c: [i64; 3], best: &mut (usize, f64)) {
        let mut d2 = 0.0;
        for a in 0..3 {
            let lo = self.origin[a] + c[a] as f64 * self.cell;
            let gap = (lo - q[a]).max(q[a] - lo - self.cell).max(0.0);
            d2 += gap * gap;
        }
        if d2 > best.1 {
            return;
        }
        let cell = ((c[2] as usize) * self.dims[1] + c[1] as usize) * self.dims[0] + c[0] as usize;
        for &k in &self.order[self.starts[cell]..self.starts[cell + 1]] {
            let d2 = (points[k] - q).norm_squared();
            if d2 < best.1 {
                *best = (k, d2);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // a thin box surface and a volumetric cloud
        let surface: Vec<Vec3> = (0..6000)
            .map(|_| {
                let mut p = Vec3::new(
                    rng.random_range(-0.06..0.06),
                    rng.random_range(-0.08..0.08),
                    rng.random_range(-0.045..0.045),
                );
                let a = rng.random_range(0..3);
                p[a] = if rng.random_bool(0.5) { 1.0 } else { -1.0 } * [0.06, 0.08, 0.045][a];
                p
            })
            .collect();
        let cloud: Vec<Vec3> = (0..3000)
            .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        for pts in [&surface, &cloud] {
            let nn = NearestNeighbors::new(pts);
            assert!(nn.grid.is_some());
            for _ in 0..500 {
                let q = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
                let (_, d) = nn.nearest(&q);
                assert_eq!(d, brute_force(pts, &q).1);
            }
        }
    }

    proptest! {
        #[test]
        fn grid_exact_far_queries(seed in 0u64..1000, qx in -5.0..5.0f64, qy in -5.0..5.0f64, qz in -5.0..5.0f64) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Vec3> = (0..2500)
                .map(|_| Vec3::new(rng.random_range(0.0..0.2), rng.random_range(0.0..0.01), rng.random_range(0.0..0.1)))
                .collect();
            let q = Vec3::new(qx, qy, qz);
            prop_assert_eq!(NearestNeighbors::new(&pts).nearest(&q).1, brute_force(&pts, &q).1);
        }
    }
}
