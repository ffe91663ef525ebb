//! Symmetric banded matrices and their Cholesky factorization.
//!
//! Chain-structured pose graphs give normal equations whose non-zeros lie within a
//! fixed distance of the diagonal; the factor keeps that band.

/// Lower band of a symmetric `n x n` matrix: entries `(r, c)` with `r - bw <= c <= r`.
#[derive(Clone, Debug, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bw = bandwidth.min(n.saturating_sub(1));
        BandedMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    fn slot(&self, r: usize, c: usize) -> Option<usize> {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        (r - c <= self.bw).then(|| r * (self.bw + 1) + (r - c))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.slot(r, c).map_or(0.0, |k| self.data[k])
    }

    /// Adds to the symmetric pair `(r, c)` / `(c, r)`.
    ///
    /// # Panics
    /// If the entry lies outside the band.
    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let k = self
            .slot(r, c)
            .unwrap_or_else(|| panic!("entry ({r}, {c}) outside bandwidth {}", self.bw));
        self.data[k] += v;
    }

    /// `L Lᵀ` factorization; `None` if the matrix is not numerically positive definite.
    pub fn cholesky(&self) -> Option<BandedCholesky> {
        let mut l = self.clone();
        for i in 0..self.n {
            let lo_i = i.saturating_sub(self.bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(self.bw));
                let mut s = l.get(i, j);
                for k in lo..j {
                    s -= l.get(i, k) * l.get(j, k);
                }
                let slot = l.slot(i, j).unwrap();
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return None;
                    }
                    l.data[slot] = s.sqrt();
                } else {
                    l.data[slot] = s / l.get(j, j);
                }
            }
        }
        Some(BandedCholesky { l })
    }
}

#[derive(Clone, Debug)]
pub struct BandedCholesky {
    l: BandedMatrix,
}

impl BandedCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.l.n, self.l.bw);
        assert_eq!(b.len(), n, "right-hand side length");
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l.get(i, k) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l.get(k, i) * y[k];
            }
            y[i] = s / self.l.get(i, i);
        }
        y
    }
}
