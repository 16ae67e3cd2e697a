//! Finite weighted graphs: Dirichlet boxes of `Z^d`, their edge refinements,
//! balls and graph distances.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::rng::{combine, CounterUniform, Purpose};
use crate::Error;

/// How edge weights of a lattice box are chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightMode {
    Unit,
    UniformlyEllipticRandom { c_lo: f64, c_hi: f64, seed: u64 },
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightMode::Unit => write!(f, "unit"),
            WeightMode::UniformlyEllipticRandom { c_lo, c_hi, .. } => {
                write!(f, "random[{c_lo};{c_hi}]")
            }
        }
    }
}

/// Parameters of a sampling box `[-L, L]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub d: usize,
    /// Half side `L`; the outer layer `|x|_inf = L` is the Dirichlet boundary.
    pub half_side: usize,
    /// Observation radius `L_obs` (graph distance).
    pub obs_radius: usize,
    pub weight_mode: WeightMode,
}

impl LatticeSpec {
    pub fn unit(d: usize, half_side: usize, obs_radius: usize) -> Self {
        Self {
            d,
            half_side,
            obs_radius,
            weight_mode: WeightMode::Unit,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.d < 3 {
            return Err(Error::NonTransient(self.d));
        }
        if self.half_side < 1 || self.obs_radius + 1 > self.half_side {
            return Err(Error::Window {
                obs_radius: self.obs_radius,
                half_side: self.half_side,
            });
        }
        if let WeightMode::UniformlyEllipticRandom { c_lo, c_hi, .. } = self.weight_mode {
            if !(c_lo > 0.0 && c_lo <= c_hi && c_hi.is_finite()) {
                return Err(Error::Config(format!(
                    "invalid weight range [{c_lo}, {c_hi}]"
                )));
            }
        }
        Ok(())
    }

    pub fn side(&self) -> usize {
        2 * self.half_side + 1
    }

    pub fn vertex_count(&self) -> usize {
        self.side().pow(self.d as u32)
    }

    /// `(nu, alpha)`: Green decay exponent `nu = d - 2` and volume growth `alpha = d`.
    pub fn exponents(&self) -> (f64, f64) {
        (self.d as f64 - 2.0, self.d as f64)
    }

    /// Edge weight of the lattice edge `{x, y}`.
    pub fn edge_weight(&self, x: usize, y: usize) -> f64 {
        match self.weight_mode {
            WeightMode::Unit => 1.0,
            WeightMode::UniformlyEllipticRandom { c_lo, c_hi, seed } => {
                let u = CounterUniform::new(combine(seed, Purpose::Weights as u64)).pair(x, y);
                c_lo + (c_hi - c_lo) * u
            }
        }
    }
}

/// Distance declared on the graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    GraphDistance,
}

/// Read-only neighbourhood access shared by explicit and implicit graphs.
pub trait Network: Sync {
    fn vertex_count(&self) -> usize;
    fn origin(&self) -> usize;
    fn is_boundary(&self, x: usize) -> bool;
    fn vertex_weight(&self, x: usize) -> f64;
    /// Calls `f(y, lambda_xy)` for every neighbour `y` of `x`.
    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, x: usize, f: F);
    /// Same as [`Network::for_each_neighbor`], for an interior `x`.
    #[inline]
    fn for_each_interior_neighbor<F: FnMut(usize, f64)>(&self, x: usize, f: F) {
        self.for_each_neighbor(x, f)
    }
    /// Identifier of the graph, used to check that objects share a domain.
    fn tag(&self) -> u64;
}

/// Finite graph with symmetric positive conductances and a Dirichlet layer.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    offsets: Vec<usize>,
    adjacency: Vec<(u32, f64)>,
    vertex_weight: Vec<f64>,
    boundary: Vec<bool>,
    origin: usize,
    pub metric: Metric,
    pub lattice: Option<LatticeSpec>,
}

impl WeightedGraph {
    /// Builds a graph from an undirected edge list. Duplicate edges are merged.
    pub fn from_edges(
        n: usize,
        edges: &[(usize, usize, f64)],
        boundary: Vec<bool>,
        origin: usize,
    ) -> Result<Self, Error> {
        if boundary.len() != n || origin >= n {
            return Err(Error::Graph(
                "vertex arrays do not match vertex count".into(),
            ));
        }
        let mut lists: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(x, y, w) in edges {
            if x == y || x >= n || y >= n || !(w > 0.0) || !w.is_finite() {
                return Err(Error::Graph(format!("bad edge ({x}, {y}, {w})")));
            }
            lists[x].push((y as u32, w));
            lists[y].push((x as u32, w));
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut adjacency = Vec::new();
        let mut vertex_weight = Vec::with_capacity(n);
        offsets.push(0);
        for mut l in lists {
            l.sort_by_key(|e| e.0);
            let mut merged: Vec<(u32, f64)> = Vec::with_capacity(l.len());
            for (y, w) in l {
                match merged.last_mut() {
                    Some(last) if last.0 == y => last.1 += w,
                    _ => merged.push((y, w)),
                }
            }
            vertex_weight.push(merged.iter().map(|e| e.1).sum());
            adjacency.extend(merged);
            offsets.push(adjacency.len());
        }
        Ok(Self {
            offsets,
            adjacency,
            vertex_weight,
            boundary,
            origin,
            metric: Metric::GraphDistance,
            lattice: None,
        })
    }

    pub fn n(&self) -> usize {
        self.vertex_weight.len()
    }

    pub fn neighbors(&self, x: usize) -> &[(u32, f64)] {
        &self.adjacency[self.offsets[x]..self.offsets[x + 1]]
    }

    pub fn weight(&self, x: usize, y: usize) -> Option<f64> {
        let nb = self.neighbors(x);
        nb.binary_search_by_key(&(y as u32), |e| e.0)
            .ok()
            .map(|i| nb[i].1)
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.len() / 2
    }

    /// Undirected edges `(x, y, lambda_xy)` with `x < y`, in vertex order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n()).flat_map(move |x| {
            self.neighbors(x)
                .iter()
                .filter(move |e| (e.0 as usize) > x)
                .map(move |e| (x, e.0 as usize, e.1))
        })
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.n()).filter(|&x| !self.boundary[x]).collect()
    }

    /// Checks symmetry, positivity, vertex-weight consistency and connectivity
    /// of the interior.
    pub fn check_invariants(&self) -> Result<(), Error> {
        for x in 0..self.n() {
            let mut sum = 0.0;
            for &(y, w) in self.neighbors(x) {
                let y = y as usize;
                if y == x || !(w > 0.0) {
                    return Err(Error::Graph(format!("bad edge ({x}, {y})")));
                }
                match self.weight(y, x) {
                    Some(v) if v == w => {}
                    _ => return Err(Error::Graph(format!("asymmetric edge ({x}, {y})"))),
                }
                sum += w;
            }
            if (sum - self.vertex_weight[x]).abs() > 1e-12 * sum.max(1.0) {
                return Err(Error::Graph(format!("vertex weight mismatch at {x}")));
            }
        }
        let interior = self.interior();
        if let Some(&start) = interior.first() {
            let mut seen = vec![false; self.n()];
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            let mut count = 1;
            while let Some(x) = queue.pop_front() {
                for &(y, _) in self.neighbors(x) {
                    let y = y as usize;
                    if !self.boundary[y] && !seen[y] {
                        seen[y] = true;
                        count += 1;
                        queue.push_back(y);
                    }
                }
            }
            if count != interior.len() {
                return Err(Error::Graph("interior is not connected".into()));
            }
        }
        Ok(())
    }

    /// Writes the edge list as CSV with a `#d,L,L_obs,weight_mode,seed` header.
    pub fn dump_csv<W: Write>(&self, mut out: W, seed: u64) -> std::io::Result<()> {
        match &self.lattice {
            Some(s) => writeln!(
                out,
                "#{},{},{},{},{}",
                s.d, s.half_side, s.obs_radius, s.weight_mode, seed
            )?,
            None => writeln!(out, "#,,,,{seed}")?,
        }
        writeln!(out, "vertex_u,vertex_v,weight")?;
        for (x, y, w) in self.edges() {
            writeln!(out, "{x},{y},{}", crate::stats::fmt_f64(w))?;
        }
        Ok(())
    }
}

impl Network for WeightedGraph {
    fn vertex_count(&self) -> usize {
        self.n()
    }
    fn origin(&self) -> usize {
        self.origin
    }
    fn is_boundary(&self, x: usize) -> bool {
        self.boundary[x]
    }
    fn vertex_weight(&self, x: usize) -> f64 {
        self.vertex_weight[x]
    }
    #[inline]
    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, x: usize, mut f: F) {
        for &(y, w) in self.neighbors(x) {
            f(y as usize, w);
        }
    }
    fn tag(&self) -> u64 {
        let mut t = combine(self.n() as u64, self.adjacency.len() as u64);
        for (i, w) in self.vertex_weight.iter().enumerate().step_by(97) {
            t = combine(t, w.to_bits() ^ i as u64);
        }
        t
    }
}

/// Implicit box `[-L, L]^d` with unit weights; no adjacency storage.
#[derive(Clone, Copy, Debug)]
pub struct BoxLattice {
    pub d: usize,
    pub half_side: usize,
    side: usize,
    strides: [usize; 8],
}

impl BoxLattice {
    pub fn new(d: usize, half_side: usize) -> Self {
        assert!((1..=8).contains(&d), "dimension out of range");
        let side = 2 * half_side + 1;
        let mut strides = [0; 8];
        let mut s = 1;
        for i in (0..d).rev() {
            strides[i] = s;
            s *= side;
        }
        Self {
            d,
            half_side,
            side,
            strides,
        }
    }

    pub fn from_spec(spec: &LatticeSpec) -> Self {
        Self::new(spec.d, spec.half_side)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Centered coordinates of vertex `x`.
    pub fn coords(&self, x: usize) -> Vec<i64> {
        (0..self.d)
            .map(|i| ((x / self.strides[i]) % self.side) as i64 - self.half_side as i64)
            .collect()
    }

    /// Vertex at centered coordinates, if inside the box.
    pub fn vertex(&self, c: &[i64]) -> Option<usize> {
        let l = self.half_side as i64;
        let mut id = 0;
        for (i, &ci) in c.iter().enumerate() {
            if ci < -l || ci > l {
                return None;
            }
            id += (ci + l) as usize * self.strides[i];
        }
        Some(id)
    }

    /// `l1` distance from the origin; equals the graph distance in a box.
    pub fn norm1(&self, x: usize) -> usize {
        self.coords(x)
            .iter()
            .map(|c| c.unsigned_abs() as usize)
            .sum()
    }

    pub fn norm_inf(&self, x: usize) -> usize {
        self.coords(x)
            .iter()
            .map(|c| c.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }
}

impl Network for BoxLattice {
    fn vertex_count(&self) -> usize {
        self.side.pow(self.d as u32)
    }
    fn origin(&self) -> usize {
        (self.vertex_count() - 1) / 2
    }
    #[inline]
    fn is_boundary(&self, x: usize) -> bool {
        (0..self.d).any(|i| {
            let c = (x / self.strides[i]) % self.side;
            c == 0 || c == self.side - 1
        })
    }
    fn vertex_weight(&self, _x: usize) -> f64 {
        2.0 * self.d as f64
    }
    #[inline]
    fn for_each_neighbor<F: FnMut(usize, f64)>(&self, x: usize, mut f: F) {
        for i in 0..self.d {
            let s = self.strides[i];
            let c = (x / s) % self.side;
            if c > 0 {
                f(x - s, 1.0);
            }
            if c + 1 < self.side {
                f(x + s, 1.0);
            }
        }
    }
    #[inline]
    fn for_each_interior_neighbor<F: FnMut(usize, f64)>(&self, x: usize, mut f: F) {
        for &s in &self.strides[..self.d] {
            f(x - s, 1.0);
            f(x + s, 1.0);
        }
    }
    fn tag(&self) -> u64 {
        combine(combine(0xB0C5, self.d as u64), self.half_side as u64)
    }
}

/// Builds the box `[-L, L]^d` with its outer layer flagged as Dirichlet boundary.
pub fn build_lattice(spec: &LatticeSpec) -> Result<WeightedGraph, Error> {
    spec.validate()?;
    let lat = BoxLattice::from_spec(spec);
    let n = lat.vertex_count();
    let mut edges = Vec::with_capacity(n * spec.d);
    for x in 0..n {
        for i in 0..spec.d {
            let s = lat.stride(i);
            if (x / s) % lat.side() + 1 < lat.side() {
                edges.push((x, x + s, spec.edge_weight(x, x + s)));
            }
        }
    }
    let boundary = (0..n).map(|x| lat.is_boundary(x)).collect();
    let mut g = WeightedGraph::from_edges(n, &edges, boundary, lat.origin())?;
    g.lattice = Some(*spec);
    Ok(g)
}

/// A graph whose edges are subdivided into chains of `m` edges of weight
/// `m * lambda`.
#[derive(Clone, Debug)]
pub struct RefinedGraph {
    pub base: WeightedGraph,
    pub m: usize,
    pub graph: WeightedGraph,
    /// For each base edge `(x, y)` with `x < y`: the refined vertex chain from
    /// `x` to `y`, endpoints included.
    pub chains: Vec<(usize, usize, Vec<usize>)>,
}

impl RefinedGraph {
    /// Refined id of an original vertex (original ids are preserved).
    pub fn refined_id(&self, x: usize) -> usize {
        x
    }

    /// Index into `chains` of the base edge `{x, y}`.
    pub fn chain_index(&self, x: usize, y: usize) -> Option<usize> {
        let key = if x < y { (x, y) } else { (y, x) };
        self.chains.binary_search_by_key(&key, |c| (c.0, c.1)).ok()
    }

    /// Series conductance between the endpoints of chain `i`.
    pub fn chain_conductance(&self, i: usize) -> f64 {
        let chain = &self.chains[i].2;
        let resistance: f64 = chain
            .windows(2)
            .map(|w| 1.0 / self.graph.weight(w[0], w[1]).expect("chain edge"))
            .sum();
        1.0 / resistance
    }
}

/// Subdivides every edge of `g` into `m` edges.
///
/// Interior chain vertices are interior unless both endpoints are boundary.
pub fn refine(g: &WeightedGraph, m: usize) -> Result<RefinedGraph, Error> {
    if m == 0 {
        return Err(Error::Subdivision);
    }
    let n = g.n();
    let mut boundary = g.boundary_flags().to_vec();
    let mut edges = Vec::with_capacity(g.edge_count() * m);
    let mut chains = Vec::with_capacity(g.edge_count());
    let mut next = n;
    for (x, y, w) in g.edges() {
        let both = g.is_boundary(x) && g.is_boundary(y);
        let mut chain = Vec::with_capacity(m + 1);
        chain.push(x);
        for _ in 1..m {
            chain.push(next);
            boundary.push(both);
            next += 1;
        }
        chain.push(y);
        for k in chain.windows(2) {
            edges.push((k[0], k[1], m as f64 * w));
        }
        chains.push((x, y, chain));
    }
    let mut graph = WeightedGraph::from_edges(next, &edges, boundary, g.origin())?;
    graph.metric = g.metric;
    graph.lattice = g.lattice;
    Ok(RefinedGraph {
        base: g.clone(),
        m,
        graph,
        chains,
    })
}

/// Graph-distance ball `B(center, r)`, sorted by vertex id.
pub fn ball<N: Network>(g: &N, center: usize, r: usize) -> Result<Vec<usize>, Error> {
    if center >= g.vertex_count() {
        return Err(Error::Graph(format!("vertex {center} out of range")));
    }
    if g.is_boundary(center) {
        return Err(Error::BoundaryCenter(center));
    }
    let dist = bfs_distances(g, center, Some(r));
    let mut out: Vec<usize> = (0..dist.len()).filter(|&x| dist[x] != usize::MAX).collect();
    out.sort_unstable();
    Ok(out)
}

/// Shortest-path edge count between `x` and `y`, if connected.
pub fn graph_distance<N: Network>(g: &N, x: usize, y: usize) -> Option<usize> {
    let n = g.vertex_count();
    if x >= n || y >= n {
        return None;
    }
    let d = bfs_distances(g, x, None)[y];
    (d != usize::MAX).then_some(d)
}

/// BFS distances from `source`; vertices beyond `cutoff` stay `usize::MAX`.
pub fn bfs_distances<N: Network>(g: &N, source: usize, cutoff: Option<usize>) -> Vec<usize> {
    let mut dist = vec![usize::MAX; g.vertex_count()];
    dist[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(x) = queue.pop_front() {
        let dx = dist[x];
        if cutoff.is_some_and(|c| dx >= c) {
            continue;
        }
        g.for_each_neighbor(x, |y, _| {
            if dist[y] == usize::MAX {
                dist[y] = dx + 1;
                queue.push_back(y);
            }
        });
    }
    dist
}

/// Number of points of `Z^3` with `|x|_1 <= r`.
pub fn octahedral_count(r: usize) -> usize {
    let r = r as i64;
    ((2 * r + 1) * (2 * r * r + 2 * r + 3) / 3) as usize
}
