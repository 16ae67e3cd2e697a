//! Discrete potential theory on Dirichlet domains.
//!
//! Green functions are normalised by the weighted Laplacian:
//! `sum_z lambda_xz (g(z, y) - g(x, y)) = -delta_xy` with zero boundary values,
//! so that `g(y, y) = 1 / cap({y})`.

use serde::{Deserialize, Serialize};

use crate::graph::{ball, BoxLattice, Network, WeightedGraph};
use crate::linalg::{
    dense_cholesky_solve, pcg, BoxSpectral, CgOutcome, EnvelopeCholesky, SymmetricCsr,
};
use crate::Error;

/// Relative residual required from iterative solves.
pub const SOLVER_TOL: f64 = 1e-12;
const MAX_CG_ITER: usize = 20_000;

/// Column `g_U(., source)` of the Green function, over all vertices.
#[derive(Clone, Debug)]
pub struct GreenTable {
    pub source: usize,
    pub values: Vec<f64>,
}

/// Hitting potential, equilibrium measure and capacity of a set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PotentialSolve {
    pub domain_tag: u64,
    pub set: Vec<usize>,
    /// `h_K` over all vertices.
    pub h: Vec<f64>,
    /// `e_K` as `(vertex, mass)` pairs, sorted by vertex.
    pub e: Vec<(usize, f64)>,
    pub cap: f64,
}

/// Replacement conductance on an edge leaving a set: `inside` belongs to the
/// set, `outside` does not.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConductanceChange {
    pub inside: usize,
    pub outside: usize,
    pub conductance: f64,
}

/// Scratch buffers for repeated Dirichlet solves on one network.
#[derive(Clone, Debug, Default)]
pub struct HarmonicWorkspace {
    in_set: Vec<bool>,
    free: Vec<bool>,
    diag: Vec<f64>,
    rhs: Vec<f64>,
    /// Last solution; reused as the initial guess when requested.
    pub h: Vec<f64>,
    pos: Vec<usize>,
}

impl HarmonicWorkspace {
    pub fn new(n: usize) -> Self {
        Self {
            in_set: vec![false; n],
            free: vec![false; n],
            diag: vec![0.0; n],
            rhs: vec![0.0; n],
            h: vec![0.0; n],
            pos: vec![0; n],
        }
    }
}

/// Outcome of a capacity solve.
#[derive(Clone, Debug)]
pub struct CapacitySolve {
    pub cap: f64,
    /// `e(x)` for the vertices of the set, in the order given.
    pub e: Vec<f64>,
    pub cg: CgOutcome,
}

/// Capacity of `set` in `net` (boundary = killing), with conductances of
/// some edges leaving the set replaced.
///
/// Solves for the potential `h` equal to 1 on the set, 0 on the boundary and
/// harmonic elsewhere, by conjugate gradients preconditioned with symmetric
/// Gauss-Seidel. With `warm = true` the previous solution in `ws.h` is the
/// initial guess.
pub fn set_capacity<N: Network>(
    net: &N,
    set: &[usize],
    changes: &[ConductanceChange],
    ws: &mut HarmonicWorkspace,
    warm: bool,
    tol: f64,
) -> Result<CapacitySolve, Error> {
    let n = net.vertex_count();
    if ws.in_set.len() != n {
        *ws = HarmonicWorkspace::new(n);
    }
    for (i, &x) in set.iter().enumerate() {
        if net.is_boundary(x) {
            clear_set(ws, &set[..i]);
            return Err(Error::Set(format!(
                "vertex {x} of the set lies on the boundary"
            )));
        }
        ws.in_set[x] = true;
        ws.pos[x] = i;
    }
    let HarmonicWorkspace {
        in_set,
        free,
        diag,
        rhs,
        h,
        ..
    } = ws;
    for x in 0..n {
        free[x] = !in_set[x] && !net.is_boundary(x);
        diag[x] = if free[x] { net.vertex_weight(x) } else { 0.0 };
        rhs[x] = 0.0;
        if !free[x] || !warm {
            h[x] = 0.0;
        }
    }
    for &x in set {
        net.for_each_interior_neighbor(x, |y, w| {
            if free[y] {
                rhs[y] += w;
            }
        });
    }
    for c in changes {
        debug_assert!(in_set[c.inside] && !in_set[c.outside]);
        let lam = edge_weight(net, c.inside, c.outside)?;
        if free[c.outside] {
            diag[c.outside] += c.conductance - lam;
            rhs[c.outside] += c.conductance - lam;
        }
    }
    let (free, diag) = (&*free, &*diag);
    let apply = |v: &[f64], out: &mut [f64]| {
        for z in 0..n {
            if free[z] {
                let mut s = diag[z] * v[z];
                net.for_each_interior_neighbor(z, |w, lam| s -= lam * v[w]);
                out[z] = s;
            } else {
                out[z] = 0.0;
            }
        }
    };
    let precond = |r: &[f64], out: &mut [f64]| {
        // (D - L) t = r
        for z in 0..n {
            if free[z] {
                let mut s = r[z];
                net.for_each_interior_neighbor(z, |w, lam| {
                    if w < z {
                        s += lam * out[w];
                    }
                });
                out[z] = s / diag[z];
            } else {
                out[z] = 0.0;
            }
        }
        // (D - U) y = D t
        for z in (0..n).rev() {
            if free[z] {
                let mut s = diag[z] * out[z];
                net.for_each_interior_neighbor(z, |w, lam| {
                    if w > z {
                        s += lam * out[w];
                    }
                });
                out[z] = s / diag[z];
            }
        }
    };
    let cg = pcg(apply, precond, rhs, h, tol, MAX_CG_ITER);
    if !cg.converged {
        clear_set(ws, set);
        return Err(Error::Solver {
            iterations: cg.iterations,
            residual: cg.relative_residual,
        });
    }
    let mut e = Vec::with_capacity(set.len());
    let mut cap = 0.0;
    for &x in set {
        let mut ex = 0.0;
        net.for_each_interior_neighbor(x, |y, w| {
            if !ws.in_set[y] {
                ex += w * (1.0 - ws.h[y]);
            }
        });
        e.push(ex);
    }
    for c in changes {
        let lam = edge_weight(net, c.inside, c.outside)?;
        e[ws.pos[c.inside]] += (c.conductance - lam) * (1.0 - ws.h[c.outside]);
    }
    for v in &e {
        cap += v;
    }
    clear_set(ws, set);
    Ok(CapacitySolve { cap, e, cg })
}

fn clear_set(ws: &mut HarmonicWorkspace, set: &[usize]) {
    for &x in set {
        ws.in_set[x] = false;
    }
}

fn edge_weight<N: Network>(net: &N, x: usize, y: usize) -> Result<f64, Error> {
    let mut found = None;
    net.for_each_neighbor(x, |z, w| {
        if z == y {
            found = Some(w);
        }
    });
    found.ok_or_else(|| Error::Graph(format!("no edge between {x} and {y}")))
}

enum Backend {
    Spectral(BoxSpectral),
    Direct {
        factor: EnvelopeCholesky,
        index: Vec<usize>,
    },
}

/// A Dirichlet domain together with a factorisation of its Laplacian.
pub struct Domain<N: Network> {
    pub net: N,
    backend: Backend,
}

impl Domain<BoxLattice> {
    /// Unit-weight box; Green solves use the sine transform.
    pub fn spectral(lattice: BoxLattice) -> Self {
        Self {
            net: lattice,
            backend: Backend::Spectral(BoxSpectral::new(lattice)),
        }
    }

    pub fn spectral_backend(&self) -> &BoxSpectral {
        match &self.backend {
            Backend::Spectral(s) => s,
            Backend::Direct { .. } => unreachable!("spectral domain"),
        }
    }
}

impl Domain<WeightedGraph> {
    /// General graph; Green solves use an envelope Cholesky factor.
    pub fn direct(graph: WeightedGraph) -> Result<Self, Error> {
        let (matrix, index) = interior_laplacian(&graph);
        let factor = EnvelopeCholesky::factor(&matrix)?;
        Ok(Self {
            net: graph,
            backend: Backend::Direct { factor, index },
        })
    }

    pub fn factor(&self) -> &EnvelopeCholesky {
        match &self.backend {
            Backend::Direct { factor, .. } => factor,
            Backend::Spectral(_) => unreachable!("direct domain"),
        }
    }

    /// Map from vertex to row of the interior Laplacian (`usize::MAX` on the
    /// boundary).
    pub fn interior_index(&self) -> &[usize] {
        match &self.backend {
            Backend::Direct { index, .. } => index,
            Backend::Spectral(_) => unreachable!("direct domain"),
        }
    }
}

/// Laplacian restricted to interior vertices, and the vertex -> row map.
pub fn interior_laplacian(g: &WeightedGraph) -> (SymmetricCsr, Vec<usize>) {
    let mut index = vec![usize::MAX; g.n()];
    let interior = g.interior();
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
    (SymmetricCsr::from_rows(rows), index)
}

impl<N: Network> Domain<N> {
    /// Number of interior vertices (unknowns of the Laplacian).
    pub fn interior_len(&self) -> usize {
        match &self.backend {
            Backend::Spectral(s) => s.interior_len(),
            Backend::Direct { factor, .. } => factor.n(),
        }
    }

    /// Maps `interior_len()` standard normals to a centered Gaussian vector
    /// with covariance `g_U`, returned over all vertices (zero on the
    /// boundary). `z` is overwritten.
    pub fn correlate(&self, z: &mut [f64]) -> Vec<f64> {
        let n = self.net.vertex_count();
        let mut out = vec![0.0; n];
        match &self.backend {
            Backend::Spectral(s) => {
                s.correlate_in_place(z);
                s.scatter(z, &mut out);
            }
            Backend::Direct { factor, index } => {
                let v = factor.correlate(z);
                for x in 0..n {
                    if index[x] != usize::MAX {
                        out[x] = v[index[x]];
                    }
                }
            }
        }
        out
    }

    /// Harmonic extension of `values` prescribed on `set` (zero on the
    /// boundary) to the rest of the domain.
    pub fn harmonic_extension(&self, set: &[usize], values: &[f64]) -> Result<Vec<f64>, Error> {
        let n = self.net.vertex_count();
        let mut blocked = vec![false; n];
        let mut data = vec![0.0; n];
        for (&x, &v) in set.iter().zip(values) {
            blocked[x] = true;
            data[x] = v;
        }
        let mut b = vec![0.0; n];
        for &x in set {
            self.net.for_each_neighbor(x, |y, w| {
                if !blocked[y] {
                    b[y] += w * data[x];
                }
            });
        }
        let mut out = self.free_solve(&blocked, &b)?;
        for &x in set {
            out[x] = data[x];
        }
        Ok(out)
    }

    /// `G rhs` for a right-hand side given on all vertices (boundary entries
    /// are ignored); the result vanishes on the boundary.
    pub fn apply_green(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.net.vertex_count();
        match &self.backend {
            Backend::Spectral(s) => {
                let mut v = s.gather(rhs);
                s.solve_in_place(&mut v);
                let mut out = vec![0.0; n];
                s.scatter(&v, &mut out);
                out
            }
            Backend::Direct { factor, index } => {
                let mut b = vec![0.0; factor.n()];
                for x in 0..n {
                    if index[x] != usize::MAX {
                        b[index[x]] = rhs[x];
                    }
                }
                let sol = factor.solve(&b);
                (0..n)
                    .map(|x| {
                        if index[x] == usize::MAX {
                            0.0
                        } else {
                            sol[index[x]]
                        }
                    })
                    .collect()
            }
        }
    }

    /// Green column `g_U(., y)`; identically zero when `y` is on the boundary.
    pub fn green_column(&self, y: usize) -> GreenTable {
        let n = self.net.vertex_count();
        let mut rhs = vec![0.0; n];
        if !self.net.is_boundary(y) {
            rhs[y] = 1.0;
        }
        GreenTable {
            source: y,
            values: self.apply_green(&rhs),
        }
    }

    /// `g_U(x, y)`.
    pub fn green(&self, x: usize, y: usize) -> f64 {
        if self.net.is_boundary(x) || self.net.is_boundary(y) {
            return 0.0;
        }
        self.green_column(y).values[x]
    }

    fn check_set(&self, set: &[usize]) -> Result<(), Error> {
        if set.is_empty() {
            return Err(Error::Set("empty set".into()));
        }
        if let Some(&x) = set
            .iter()
            .find(|&&x| x >= self.net.vertex_count() || self.net.is_boundary(x))
        {
            return Err(Error::Set(format!("vertex {x} is not interior")));
        }
        Ok(())
    }

    /// Hitting potential `h_K` over all vertices.
    pub fn hitting_potential(&self, set: &[usize]) -> Result<Vec<f64>, Error> {
        Ok(self.equilibrium_measure(set)?.h)
    }

    /// Equilibrium measure and capacity of `set`.
    pub fn equilibrium_measure(&self, set: &[usize]) -> Result<PotentialSolve, Error> {
        self.check_set(set)?;
        let mut set = set.to_vec();
        set.sort_unstable();
        set.dedup();
        let mut ws = HarmonicWorkspace::new(self.net.vertex_count());
        let sol = set_capacity(&self.net, &set, &[], &mut ws, false, SOLVER_TOL)?;
        let mut h = ws.h;
        for &x in &set {
            h[x] = 1.0;
        }
        Ok(PotentialSolve {
            domain_tag: self.net.tag(),
            e: set.iter().copied().zip(sol.e).collect(),
            set,
            h,
            cap: sol.cap,
        })
    }

    /// `max_x |sum_y g(x, y) e_K(y) - h_K(x)|` over all vertices.
    pub fn potential_identity_deviation(&self, ps: &PotentialSolve) -> f64 {
        let mut rhs = vec![0.0; self.net.vertex_count()];
        for &(x, v) in &ps.e {
            rhs[x] = v;
        }
        let ge = self.apply_green(&rhs);
        ge.iter()
            .zip(&ps.h)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Maximal deviation between the hitting distribution of `K` under
    /// `P_{e_{K'}}` and `e_K`.
    ///
    /// The hitting distribution is obtained from one adjoint Dirichlet solve:
    /// with `F` the free vertices off `K`, `w = A_FF^{-1} e_{K'}|_F` and
    /// `P_{e_{K'}}(X_{H_K} = x) = e_{K'}(x) + sum_{z in F} lambda_xz w(z)`.
    pub fn sweeping_check(&self, set: &[usize], superset: &[usize]) -> Result<f64, Error> {
        self.check_set(set)?;
        self.check_set(superset)?;
        let mut sup = superset.to_vec();
        sup.sort_unstable();
        if let Some(&x) = set.iter().find(|x| sup.binary_search(x).is_err()) {
            return Err(Error::Set(format!("vertex {x} of K is not in K'")));
        }
        let inner = self.equilibrium_measure(set)?;
        let outer = self.equilibrium_measure(superset)?;
        let n = self.net.vertex_count();
        let mut in_k = vec![false; n];
        for &x in &inner.set {
            in_k[x] = true;
        }
        let mut e_outer = vec![0.0; n];
        for &(x, v) in &outer.e {
            e_outer[x] = v;
        }
        let w = self.free_solve(&in_k, &e_outer)?;
        let mut dev: f64 = 0.0;
        for &(x, ex) in &inner.e {
            let mut hit = e_outer[x];
            self.net.for_each_interior_neighbor(x, |z, lam| {
                if !in_k[z] {
                    hit += lam * w[z];
                }
            });
            dev = dev.max((hit - ex).abs());
        }
        Ok(dev)
    }

    /// Solves `A_FF w = b|_F` where `F` is the interior minus `blocked`.
    fn free_solve(&self, blocked: &[bool], b: &[f64]) -> Result<Vec<f64>, Error> {
        let n = self.net.vertex_count();
        let net = &self.net;
        let free: Vec<bool> = (0..n).map(|x| !blocked[x] && !net.is_boundary(x)).collect();
        let rhs: Vec<f64> = (0..n).map(|x| if free[x] { b[x] } else { 0.0 }).collect();
        let apply = |v: &[f64], out: &mut [f64]| {
            for z in 0..n {
                out[z] = if free[z] {
                    let mut s = net.vertex_weight(z) * v[z];
                    net.for_each_interior_neighbor(z, |w, lam| s -= lam * v[w]);
                    s
                } else {
                    0.0
                };
            }
        };
        let jacobi = |r: &[f64], out: &mut [f64]| {
            for z in 0..n {
                out[z] = if free[z] {
                    r[z] / net.vertex_weight(z)
                } else {
                    0.0
                };
            }
        };
        let mut w = vec![0.0; n];
        let out = pcg(apply, jacobi, &rhs, &mut w, SOLVER_TOL, MAX_CG_ITER);
        if !out.converged {
            return Err(Error::Solver {
                iterations: out.iterations,
                residual: out.relative_residual,
            });
        }
        Ok(w)
    }

    /// Exact capacities `cap(B(origin, r))` for each radius; radii beyond
    /// `window` are rejected.
    pub fn ball_capacity_profile(
        &self,
        radii: &[usize],
        window: usize,
    ) -> Result<Vec<(usize, f64)>, Error> {
        let o = self.net.origin();
        radii
            .iter()
            .map(|&r| {
                if r > window {
                    return Err(Error::Set(format!(
                        "radius {r} exceeds the window {window}"
                    )));
                }
                let b = ball(&self.net, o, r)?;
                Ok((r, self.equilibrium_measure(&b)?.cap))
            })
            .collect()
    }
}

/// A point of the cable system: fraction `f` of the way from `x` to `y` along
/// a cable of conductance `lambda`. `f = 0` is the vertex `x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CablePoint {
    pub x: usize,
    pub y: usize,
    pub f: f64,
    pub lambda: f64,
}

impl CablePoint {
    pub fn vertex(x: usize) -> Self {
        Self {
            x,
            y: x,
            f: 0.0,
            lambda: 1.0,
        }
    }
}

/// Dense table of Green values between the vertices of a ball; evaluates the
/// cable-system Green function between cable points inside it.
///
/// On a cable the field is the linear interpolation of its endpoint values
/// plus an independent bridge, so `g(t, s)` is bilinear in the endpoint Green
/// values, with the bridge variance `f (1 - f) / lambda` added when `t = s`.
pub struct GreenPatch {
    pub center: usize,
    pub radius: usize,
    index: Vec<u32>,
    size: usize,
    table: Vec<f64>,
}

impl GreenPatch {
    /// Tabulates `g_U` on `B(center, radius)` with one Green column per vertex.
    pub fn new<N: Network>(
        domain: &Domain<N>,
        center: usize,
        radius: usize,
    ) -> Result<Self, Error> {
        let verts = ball(&domain.net, center, radius)?;
        let n = domain.net.vertex_count();
        let mut index = vec![u32::MAX; n];
        for (i, &v) in verts.iter().enumerate() {
            index[v] = i as u32;
        }
        let size = verts.len();
        let mut table = vec![0.0; size * size];
        for (j, &v) in verts.iter().enumerate() {
            let col = domain.green_column(v);
            for (i, &u) in verts.iter().enumerate() {
                table[i * size + j] = col.values[u];
            }
        }
        // Symmetrise against round-off.
        for i in 0..size {
            for j in 0..i {
                let m = 0.5 * (table[i * size + j] + table[j * size + i]);
                table[i * size + j] = m;
                table[j * size + i] = m;
            }
        }
        let boundary: Vec<bool> = (0..n).map(|x| domain.net.is_boundary(x)).collect();
        for (x, b) in boundary.iter().enumerate() {
            if *b && index[x] == u32::MAX {
                index[x] = u32::MAX - 1;
            }
        }
        Ok(Self {
            center,
            radius,
            index,
            size,
            table,
        })
    }

    /// Whether `g(x, .)` is available (vertex in the patch or on the boundary).
    #[inline]
    pub fn covers(&self, x: usize) -> bool {
        self.index[x] != u32::MAX
    }

    /// `g_U(x, y)` for covered vertices.
    #[inline]
    pub fn green(&self, x: usize, y: usize) -> f64 {
        let (i, j) = (self.index[x], self.index[y]);
        if i >= u32::MAX - 1 || j >= u32::MAX - 1 {
            return 0.0;
        }
        self.table[i as usize * self.size + j as usize]
    }

    /// Cable Green function between two cable points.
    pub fn cable_green(&self, p: &CablePoint, q: &CablePoint) -> f64 {
        let ends = |c: &CablePoint| [(c.x, 1.0 - c.f), (c.y, c.f)];
        let mut g = 0.0;
        for (a, wa) in ends(p) {
            if wa == 0.0 {
                continue;
            }
            for (b, wb) in ends(q) {
                if wb != 0.0 {
                    g += wa * wb * self.green(a, b);
                }
            }
        }
        let same_cable = p.f > 0.0
            && q.f > 0.0
            && ((p.x == q.x && p.y == q.y && p.f == q.f)
                || (p.x == q.y && p.y == q.x && p.f == 1.0 - q.f));
        if same_cable {
            g += p.f * (1.0 - p.f) / p.lambda;
        }
        g
    }

    /// Capacity of a finite set of cable points, `1^T G^{-1} 1`.
    pub fn capacity(&self, points: &[CablePoint]) -> Result<f64, Error> {
        let k = points.len();
        if k == 0 {
            return Ok(0.0);
        }
        for p in points {
            if !self.covers(p.x) || !self.covers(p.y) {
                return Err(Error::Set(format!(
                    "cable point ({}, {}) outside the Green patch",
                    p.x, p.y
                )));
            }
        }
        let mut a = vec![0.0; k * k];
        for i in 0..k {
            for j in 0..=i {
                let v = self.cable_green(&points[i], &points[j]);
                a[i * k + j] = v;
                a[j * k + i] = v;
            }
        }
        let mut b = vec![1.0; k];
        dense_cholesky_solve(&mut a, k, &mut b)?;
        Ok(b.iter().sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_lattice, LatticeSpec, WeightMode};

    #[test]
    fn singleton_capacity_is_inverse_green() {
        let d = Domain::spectral(BoxLattice::new(3, 6));
        let o = d.net.origin();
        let ps = d.equilibrium_measure(&[o]).unwrap();
        let g00 = d.green(o, o);
        assert!((ps.cap * g00 - 1.0).abs() < 1e-10);
        assert!(d.potential_identity_deviation(&ps) < 1e-9);
    }

    #[test]
    fn direct_and_spectral_green_agree() {
        let spec = LatticeSpec::unit(3, 4, 3);
        let direct = Domain::direct(build_lattice(&spec).unwrap()).unwrap();
        let spectral = Domain::spectral(BoxLattice::new(3, 4));
        let o = spectral.net.origin();
        let a = direct.green_column(o);
        let b = spectral.green_column(o);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn green_is_symmetric_on_random_weights() {
        let spec = LatticeSpec {
            weight_mode: WeightMode::UniformlyEllipticRandom {
                c_lo: 0.5,
                c_hi: 2.0,
                seed: 3,
            },
            ..LatticeSpec::unit(3, 3, 2)
        };
        let d = Domain::direct(build_lattice(&spec).unwrap()).unwrap();
        let (x, y) = (d.net.origin(), d.net.origin() + 8);
        let (gxy, gyx) = (d.green(x, y), d.green(y, x));
        assert!((gxy - gyx).abs() < 1e-9 * gxy.abs());
        assert_eq!(d.green(0, x), 0.0);
    }

    #[test]
    fn whole_interior_capacity_is_boundary_cut() {
        let d = Domain::spectral(BoxLattice::new(3, 3));
        let interior: Vec<usize> = (0..d.net.vertex_count())
            .filter(|&x| !d.net.is_boundary(x))
            .collect();
        let ps = d.equilibrium_measure(&interior).unwrap();
        // 6 faces of 5 x 5 interior vertices, one edge each to the boundary.
        assert!((ps.cap - 150.0).abs() < 1e-9);
        assert!(ps
            .h
            .iter()
            .enumerate()
            .all(|(x, &v)| if d.net.is_boundary(x) {
                v == 0.0
            } else {
                v == 1.0
            }));
    }

    #[test]
    fn sweeping_identity_on_nested_sets() {
        let d = Domain::spectral(BoxLattice::new(3, 6));
        let o = d.net.origin();
        let b1 = ball(&d.net, o, 1).unwrap();
        let b3 = ball(&d.net, o, 3).unwrap();
        assert!(d.sweeping_check(&b1, &b3).unwrap() < 1e-8);
        assert!(d.sweeping_check(&b3, &b3).unwrap() < 1e-10);
        assert!(d.sweeping_check(&b3, &b1).is_err());
    }

    #[test]
    fn rejects_bad_sets() {
        let d = Domain::spectral(BoxLattice::new(3, 3));
        assert!(d.equilibrium_measure(&[]).is_err());
        assert!(d.equilibrium_measure(&[0]).is_err());
        assert!(d.ball_capacity_profile(&[3], 2).is_err());
    }

    #[test]
    fn patch_matches_set_capacity() {
        let d = Domain::spectral(BoxLattice::new(3, 5));
        let o = d.net.origin();
        let patch = GreenPatch::new(&d, o, 3).unwrap();
        let set = ball(&d.net, o, 1).unwrap();
        let pts: Vec<CablePoint> = set.iter().map(|&x| CablePoint::vertex(x)).collect();
        let dense = patch.capacity(&pts).unwrap();
        let exact = d.equilibrium_measure(&set).unwrap().cap;
        assert!((dense - exact).abs() < 1e-9 * exact);
    }
}
