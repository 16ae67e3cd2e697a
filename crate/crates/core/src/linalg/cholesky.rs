use super::sparse::{reverse_cuthill_mckee, SymmetricCsr};
use crate::Error;

/// Envelope (profile) Cholesky factor `P A P^T = L L^T` under an RCM ordering.
///
/// Row `i` of `L` is stored densely from its first structural nonzero up to
/// the diagonal; fill stays inside the envelope.
#[derive(Clone, Debug)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[i]` is the original index of permuted row `i`.
    perm: Vec<usize>,
    inv: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    values: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SymmetricCsr) -> Result<Self, Error> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_order(a, perm)
    }

    pub fn factor_with_order(a: &SymmetricCsr, perm: Vec<usize>) -> Result<Self, Error> {
        let n = a.n;
        let p = a.permute(&perm);
        let mut inv = vec![0; n];
        for (i, &q) in perm.iter().enumerate() {
            inv[q] = i;
        }
        let first: Vec<usize> = (0..n)
            .map(|i| p.row(i).map(|e| e.0).min().unwrap_or(i).min(i))
            .collect();
        let mut start = Vec::with_capacity(n + 1);
        start.push(0);
        for i in 0..n {
            start.push(start[i] + i - first[i] + 1);
        }
        let mut values = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in p.row(i) {
                if j <= i {
                    values[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let (head, tail) = values.split_at_mut(start[i]);
                let row_j = &head[start[j]..start[j + 1]];
                let row_i = &mut tail[..i - fi + 1];
                let dot: f64 = row_i[k0 - fi..j - fi]
                    .iter()
                    .zip(&row_j[k0 - fj..j - fj])
                    .map(|(a, b)| a * b)
                    .sum();
                let ljj = row_j[j - fj];
                row_i[j - fi] = (row_i[j - fi] - dot) / ljj;
            }
            let row_i = &mut values[start[i]..start[i + 1]];
            let (off, diag) = row_i.split_at_mut(i - fi);
            let d = diag[0] - off.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) {
                return Err(Error::NotPositiveDefinite(perm[i]));
            }
            diag[0] = d.sqrt();
        }
        Ok(Self {
            n,
            perm,
            inv,
            first,
            start,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stored_entries(&self) -> usize {
        self.values.len()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[self.start[i]..self.start[i + 1]]
    }

    /// Solves `L y = b` in place (permuted coordinates).
    fn forward(&self, y: &mut [f64]) {
        for i in 0..self.n {
            let r = self.row(i);
            let fi = self.first[i];
            let dot: f64 = r[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / r[i - fi];
        }
    }

    /// Solves `L^T x = y` in place (permuted coordinates).
    fn backward(&self, x: &mut [f64]) {
        for i in (0..self.n).rev() {
            let r = self.row(i);
            let fi = self.first[i];
            let xi = x[i] / r[i - fi];
            x[i] = xi;
            for (k, v) in r[..i - fi].iter().enumerate() {
                x[fi + k] -= v * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        self.forward(&mut y);
        self.backward(&mut y);
        let mut x = vec![0.0; self.n];
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        x
    }

    /// Maps standard normals `z` to a vector with covariance `A^{-1}`:
    /// `x = P^T L^{-T} z`.
    pub fn correlate(&self, z: &mut [f64]) -> Vec<f64> {
        self.backward(z);
        (0..self.n).map(|i| z[self.inv[i]]).collect()
    }
}

/// Solves a small dense SPD system `a x = b` by Cholesky; `a` is row-major.
pub fn dense_cholesky_solve(a: &mut [f64], n: usize, b: &mut [f64]) -> Result<(), Error> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite(j));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    Ok(())
}
