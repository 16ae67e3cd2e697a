use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::graph::{BoxLattice, Network};

const PAIRS_PER_BATCH: usize = 64;

/// Spectral decomposition of the Dirichlet Laplacian of a unit-weight box.
///
/// The interior of `[-L, L]^d` is a grid of `N = 2L - 1` points per axis and
/// the Laplacian `2d I - adjacency` is diagonalised by the orthonormal type-I
/// sine transform along every axis. Interior arrays use row-major order with
/// the last axis fastest, matching the vertex order of the box.
pub struct BoxSpectral {
    lattice: BoxLattice,
    n: usize,
    d: usize,
    eigenvalues: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl BoxSpectral {
    pub fn new(lattice: BoxLattice) -> Self {
        let n = 2 * lattice.half_side - 1;
        let d = lattice.d;
        let one_d: Vec<f64> = (1..=n)
            .map(|k| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n + 1) as f64).cos())
            .collect();
        let len = n.pow(d as u32);
        let mut eigenvalues = vec![0.0; len];
        for (idx, ev) in eigenvalues.iter_mut().enumerate() {
            let mut rest = idx;
            let mut s = 0.0;
            for _ in 0..d {
                s += one_d[rest % n];
                rest /= n;
            }
            *ev = s;
        }
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self {
            lattice,
            n,
            d,
            eigenvalues,
            fft,
        }
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    /// Points per axis of the interior grid.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn interior_len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Orthonormal DST-I along every axis, in place. The transform is its own
    /// inverse.
    pub fn transform(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.interior_len());
        let n = self.n;
        let m = 2 * (n + 1);
        let scale = (2.0 / (n + 1) as f64).sqrt() * 0.5;
        let mut buf = vec![Complex64::new(0.0, 0.0); PAIRS_PER_BATCH * m];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for axis in 0..self.d {
            let stride = n.pow((self.d - 1 - axis) as u32);
            let outer = data.len() / (n * stride);
            let lines: Vec<usize> = (0..outer)
                .flat_map(|o| (0..stride).map(move |i| o * n * stride + i))
                .collect();
            for chunk in lines.chunks(2 * PAIRS_PER_BATCH) {
                let pairs = chunk.len().div_ceil(2);
                let buf = &mut buf[..pairs * m];
                for (p, pair) in chunk.chunks(2).enumerate() {
                    let seg = &mut buf[p * m..(p + 1) * m];
                    seg[0] = Complex64::new(0.0, 0.0);
                    seg[n + 1] = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        let re = data[pair[0] + j * stride];
                        let im = if pair.len() > 1 {
                            data[pair[1] + j * stride]
                        } else {
                            0.0
                        };
                        seg[j + 1] = Complex64::new(re, im);
                        seg[m - 1 - j] = Complex64::new(-re, -im);
                    }
                }
                self.fft.process_with_scratch(buf, &mut scratch);
                for (p, pair) in chunk.chunks(2).enumerate() {
                    let seg = &buf[p * m..(p + 1) * m];
                    for j in 0..n {
                        let c = seg[j + 1];
                        data[pair[0] + j * stride] = -c.im * scale;
                        if pair.len() > 1 {
                            data[pair[1] + j * stride] = c.re * scale;
                        }
                    }
                }
            }
        }
    }

    /// Replaces `rhs` (interior array) by `A^{-1} rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        self.transform(rhs);
        for (v, ev) in rhs.iter_mut().zip(&self.eigenvalues) {
            *v /= ev;
        }
        self.transform(rhs);
    }

    /// Replaces standard normals `z` (interior array) by a vector with
    /// covariance `A^{-1}`.
    pub fn correlate_in_place(&self, z: &mut [f64]) {
        for (v, ev) in z.iter_mut().zip(&self.eigenvalues) {
            *v /= ev.sqrt();
        }
        self.transform(z);
    }

    /// Interior index of box vertex `x`, if `x` is interior.
    pub fn interior_index(&self, x: usize) -> Option<usize> {
        if self.lattice.is_boundary(x) {
            return None;
        }
        let side = self.lattice.side();
        let mut rest = x;
        let mut idx = 0;
        let mut mult = 1;
        for _ in 0..self.d {
            idx += (rest % side - 1) * mult;
            mult *= self.n;
            rest /= side;
        }
        Some(idx)
    }

    /// Writes an interior array into a full box array (boundary set to zero).
    pub fn scatter(&self, interior: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        let side = self.lattice.side();
        let n = self.n;
        for (idx, &v) in interior.iter().enumerate() {
            let mut rest = idx;
            let mut x = 0;
            let mut mult = 1;
            for _ in 0..self.d {
                x += (rest % n + 1) * mult;
                mult *= side;
                rest /= n;
            }
            full[x] = v;
        }
    }

    /// Restriction of a full box array to the interior.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.interior_len()];
        let side = self.lattice.side();
        let n = self.n;
        for (idx, o) in out.iter_mut().enumerate() {
            let mut rest = idx;
            let mut x = 0;
            let mut mult = 1;
            for _ in 0..self.d {
                x += (rest % n + 1) * mult;
                mult *= side;
                rest /= n;
            }
            *o = full[x];
        }
        out
    }

    /// Green function column `g_U(., y)` as a full box array.
    pub fn green_column(&self, y: usize) -> Vec<f64> {
        let mut rhs = vec![0.0; self.interior_len()];
        let mut full = vec![0.0; self.lattice.vertex_count()];
        if let Some(i) = self.interior_index(y) {
            rhs[i] = 1.0;
            self.solve_in_place(&mut rhs);
            self.scatter(&rhs, &mut full);
        }
        full
    }

    /// `g_U(x, x)` by direct spectral summation.
    pub fn green_diagonal(&self, x: usize) -> f64 {
        let Some(_) = self.interior_index(x) else {
            return 0.0;
        };
        let n = self.n;
        let side = self.lattice.side();
        let coords: Vec<usize> = (0..self.d)
            .map(|a| (x / self.lattice.stride(a)) % side)
            .collect();
        let basis: Vec<Vec<f64>> = coords
            .iter()
            .map(|&c| {
                (1..=n)
                    .map(|k| {
                        let s = (std::f64::consts::PI * (k * c) as f64 / (n + 1) as f64).sin();
                        2.0 / (n + 1) as f64 * s * s
                    })
                    .collect()
            })
            .collect();
        let mut total = 0.0;
        for (idx, ev) in self.eigenvalues.iter().enumerate() {
            let mut rest = idx;
            let mut w = 1.0;
            for a in (0..self.d).rev() {
                w *= basis[a][rest % n];
                rest /= n;
            }
            total += w / ev;
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, LatticeSpec};
    use crate::linalg::{EnvelopeCholesky, SymmetricCsr};

    fn interior_matrix(l: usize) -> (SymmetricCsr, Vec<usize>) {
        let g = build_lattice(&LatticeSpec::unit(3, l, l - 1)).unwrap();
        let interior = g.interior();
        let mut index = vec![usize::MAX; g.n()];
        for (i, &x) in interior.iter().enumerate() {
            index[x] = i;
        }
        let rows = interior
            .iter()
            .map(|&x| {
                let mut r = vec![(index[x], g.vertex_weight(x))];
                for &(y, w) in g.neighbors(x) {
                    if index[y as usize] != usize::MAX {
                        r.push((index[y as usize], -w));
                    }
                }
                r
            })
            .collect();
        (SymmetricCsr::from_rows(rows), interior)
    }

    #[test]
    fn transform_is_involution() {
        let s = BoxSpectral::new(BoxLattice::new(3, 3));
        let orig: Vec<f64> = (0..s.interior_len())
            .map(|i| ((i * 31 % 17) as f64).cos())
            .collect();
        let mut v = orig.clone();
        s.transform(&mut v);
        s.transform(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_solve_matches_cholesky() {
        let l = 4;
        let s = BoxSpectral::new(BoxLattice::new(3, l));
        let (a, interior) = interior_matrix(l);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let rhs: Vec<f64> = (0..a.n).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
        let x_direct = chol.solve(&rhs);
        // Interior ordering of the graph equals the spectral interior ordering.
        for (i, &x) in interior.iter().enumerate() {
            assert_eq!(s.interior_index(x), Some(i));
        }
        let mut x_spec = rhs.clone();
        s.solve_in_place(&mut x_spec);
        for (p, q) in x_direct.iter().zip(&x_spec) {
            assert!((p - q).abs() < 1e-12);
        }
        let o = s.lattice().origin();
        let col = s.green_column(o);
        assert!((col[o] - s.green_diagonal(o)).abs() < 1e-13);
    }

    #[test]
    fn scatter_gather_roundtrip() {
        let s = BoxSpectral::new(BoxLattice::new(3, 2));
        let v: Vec<f64> = (0..s.interior_len()).map(|i| i as f64 + 1.0).collect();
        let mut full = vec![0.0; s.lattice().vertex_count()];
        s.scatter(&v, &mut full);
        assert_eq!(s.gather(&full), v);
        for x in 0..full.len() {
            if s.lattice().is_boundary(x) {
                assert_eq!(full[x], 0.0);
            }
        }
    }
}
