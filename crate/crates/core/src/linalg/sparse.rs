use std::collections::VecDeque;

/// Symmetric matrix in CSR form with both triangles stored.
#[derive(Clone, Debug)]
pub struct SymmetricCsr {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SymmetricCsr {
    /// Builds from per-row `(col, value)` lists; entries are sorted and summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if cols.len() > *offsets.last().unwrap() && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            offsets.push(cols.len());
        }
        Self {
            n,
            offsets,
            cols,
            vals,
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[i]..self.offsets[i + 1]).map(move |k| (self.cols[k], self.vals[k]))
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.row(i).find(|e| e.0 == i).map_or(0.0, |e| e.1)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.offsets[i]..self.offsets[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    /// Symmetric permutation: row `i` of the result is row `perm[i]` of `self`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; self.n];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let rows = perm
            .iter()
            .map(|&p| self.row(p).map(|(c, v)| (inv[c], v)).collect())
            .collect();
        Self::from_rows(rows)
    }
}

/// Reverse Cuthill-McKee ordering of the sparsity graph, started in each
/// component from a pseudo-peripheral vertex.
pub fn reverse_cuthill_mckee(a: &SymmetricCsr) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n)
        .map(|i| a.row(i).filter(|e| e.0 != i).count())
        .collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut levels = vec![usize::MAX; n];
    for seed in 0..n {
        if placed[seed] {
            continue;
        }
        let start = pseudo_peripheral(a, seed, &degree, &mut levels);
        let mut queue = VecDeque::from([start]);
        placed[start] = true;
        while let Some(x) = queue.pop_front() {
            order.push(x);
            let mut nb: Vec<usize> = a.row(x).map(|e| e.0).filter(|&y| !placed[y]).collect();
            nb.sort_by_key(|&y| (degree[y], y));
            for y in nb {
                placed[y] = true;
                queue.push_back(y);
            }
        }
    }
    order.reverse();
    order
}

fn pseudo_peripheral(
    a: &SymmetricCsr,
    seed: usize,
    degree: &[usize],
    levels: &mut [usize],
) -> usize {
    let mut start = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_far(a, start, degree, levels);
        if depth <= ecc {
            break;
        }
        ecc = depth;
        start = far;
    }
    start
}

fn bfs_far(
    a: &SymmetricCsr,
    start: usize,
    degree: &[usize],
    levels: &mut [usize],
) -> (usize, usize) {
    let mut visited = vec![start];
    levels[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut best = (start, 0);
    while let Some(x) = queue.pop_front() {
        let l = levels[x];
        if l > best.1 || (l == best.1 && degree[x] < degree[best.0]) {
            best = (x, l);
        }
        for (y, _) in a.row(x) {
            if levels[y] == usize::MAX {
                levels[y] = l + 1;
                visited.push(y);
                queue.push_back(y);
            }
        }
    }
    for v in visited {
        levels[v] = usize::MAX;
    }
    best
}
