//! Random interlacements seen from a finite window, and local uniqueness.
//!
//! Inside a box, the trajectories of the interlacement at level `u` that
//! visit a window `K` form a Poisson cloud with `u cap(K)` trajectories on
//! average; each enters `K` at a point drawn from `e_K / cap(K)` and then
//! runs as the jump chain until it is absorbed by the Dirichlet layer.
//! Giving every trajectory a uniform label in `[0, u]` couples all levels
//! below `u`: the soup at level `v` keeps the trajectories labelled `<= v`.

use petgraph::unionfind::UnionFind;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::gff;
use crate::graph::{ball, bfs_distances, Network};
use crate::percolation::{open_edges, Censoring, Explorer, Geometry};
use crate::potential::{Domain, PotentialSolve};
use crate::rng::{Purpose, SampleKey};
use crate::stats::proportion_stderr;
use crate::Error;

/// Trajectories of one interlacement sample that visit the window.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrajectorySoup {
    pub u: f64,
    /// The window `K`, sorted.
    pub window: Vec<usize>,
    pub cap: f64,
    /// Vertex paths from the entrance point to the absorbing boundary vertex.
    pub trajectories: Vec<Vec<u32>>,
    /// Level label of each trajectory, in `[0, u]`.
    pub labels: Vec<f64>,
}

impl TrajectorySoup {
    pub fn count(&self) -> usize {
        self.trajectories.len()
    }

    /// Poisson mean `u cap(K)` of the trajectory count.
    pub fn mean_count(&self) -> f64 {
        self.u * self.cap
    }

    /// The soup at a lower level `v <= u` under the superposition coupling.
    pub fn at_level(&self, v: f64) -> TrajectorySoup {
        let keep: Vec<usize> = (0..self.count()).filter(|&i| self.labels[i] <= v).collect();
        TrajectorySoup {
            u: v,
            window: self.window.clone(),
            cap: self.cap,
            trajectories: keep.iter().map(|&i| self.trajectories[i].clone()).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Visited interior vertices, sorted.
    pub fn visited<N: Network>(&self, net: &N) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .trajectories
            .iter()
            .flatten()
            .map(|&x| x as usize)
            .filter(|&x| !net.is_boundary(x))
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Edges crossed by some trajectory, as sorted pairs `(x, y)` with `x < y`.
    pub fn traversed_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .trajectories
            .iter()
            .flat_map(|p| {
                p.windows(2)
                    .map(|w| (w[0].min(w[1]) as usize, w[0].max(w[1]) as usize))
            })
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    /// Whether some trajectory visits a vertex with `mark[x]`.
    pub fn hits(&self, mark: &[bool]) -> bool {
        self.trajectories
            .iter()
            .flatten()
            .any(|&x| mark[x as usize])
    }
}

/// One step of the jump chain: a neighbour chosen with probability
/// `lambda_xy / lambda_x`.
#[inline]
fn jump<N: Network, R: Rng>(net: &N, x: usize, rng: &mut R) -> usize {
    let mut target = rng.random::<f64>() * net.vertex_weight(x);
    let mut chosen = usize::MAX;
    net.for_each_interior_neighbor(x, |y, w| {
        if chosen == usize::MAX {
            target -= w;
            if target < 0.0 {
                chosen = y;
            }
        }
    });
    if chosen == usize::MAX {
        // Round-off: take the last neighbour.
        net.for_each_interior_neighbor(x, |y, _| chosen = y);
    }
    chosen
}

/// Samples the trajectories of the level-`u` interlacement that visit the
/// window of `solve` (its set `K` with equilibrium measure `e_K`).
pub fn sample_soup<N: Network>(
    net: &N,
    solve: &PotentialSolve,
    u: f64,
    key: SampleKey,
) -> Result<TrajectorySoup, Error> {
    if !(u > 0.0) || !u.is_finite() {
        return Err(Error::Config(format!(
            "interlacement level must be positive, got {u}"
        )));
    }
    if solve.domain_tag != net.tag() {
        return Err(Error::DomainMismatch);
    }
    if !(solve.cap > 0.0) {
        return Err(Error::Set("window has zero capacity".into()));
    }
    let mut rng = key.rng(Purpose::Soup, 0);
    let count = if solve.cap * u > 0.0 {
        Poisson::new(u * solve.cap)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng) as usize
    } else {
        0
    };
    let mut cumulative = Vec::with_capacity(solve.e.len());
    let mut acc = 0.0;
    for &(_, e) in &solve.e {
        acc += e.max(0.0);
        cumulative.push(acc);
    }
    let mut trajectories = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for _ in 0..count {
        let t = rng.random::<f64>() * acc;
        let i = cumulative
            .partition_point(|&c| c <= t)
            .min(cumulative.len() - 1);
        let mut x = solve.e[i].0;
        let mut path = vec![x as u32];
        while !net.is_boundary(x) {
            x = jump(net, x, &mut rng);
            path.push(x as u32);
        }
        trajectories.push(path);
        labels.push(rng.random::<f64>() * u);
    }
    Ok(TrajectorySoup {
        u,
        window: solve.set.clone(),
        cap: solve.cap,
        trajectories,
        labels,
    })
}

/// Local uniqueness at `(z, R)`: every two visited vertices of `B(z, R)` are
/// joined by traversed edges lying in `B(z, lambda_factor R)`.
pub fn loc_uniq<N: Network>(
    soup: &TrajectorySoup,
    net: &N,
    z: usize,
    radius: usize,
    lambda_factor: f64,
) -> Result<bool, Error> {
    if !(lambda_factor >= 1.0) {
        return Err(Error::Config(format!(
            "lambda factor must be at least 1, got {lambda_factor}"
        )));
    }
    let outer = (lambda_factor * radius as f64).floor() as usize;
    if net.is_boundary(z) {
        return Err(Error::BoundaryCenter(z));
    }
    let dist = bfs_distances(net, z, Some(outer));
    for (x, &d) in dist.iter().enumerate() {
        if d != usize::MAX && soup.window.binary_search(&x).is_err() {
            return Err(Error::Set(format!(
                "B(z, {outer}) is not contained in the soup window"
            )));
        }
    }
    let mut local = vec![u32::MAX; dist.len()];
    let mut count = 0u32;
    for (x, &d) in dist.iter().enumerate() {
        if d != usize::MAX {
            local[x] = count;
            count += 1;
        }
    }
    let mut uf = UnionFind::<u32>::new(count as usize);
    let mut first: Option<u32> = None;
    let mut inner_points = Vec::new();
    for path in &soup.trajectories {
        for w in path.windows(2) {
            let (a, b) = (local[w[0] as usize], local[w[1] as usize]);
            if a != u32::MAX && b != u32::MAX {
                uf.union(a, b);
            }
        }
        for &x in path {
            let x = x as usize;
            if dist[x] <= radius {
                inner_points.push(local[x]);
            }
        }
    }
    for p in inner_points {
        let root = uf.find(p);
        match first {
            None => first = Some(root),
            Some(r) if r != root => return Ok(false),
            _ => {}
        }
    }
    Ok(true)
}

/// Both sides of the ball-crossing bound implied by the coupling of the
/// interlacement at level `a^2 / 2` with `{phi >= -a}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CouplingComparison {
    pub a: f64,
    pub r: usize,
    pub u: f64,
    /// `P(B_r <-> inner boundary of B_4r in {phi >= -a})`, Monte Carlo.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// `1 - exp(-u cap(B_r))`.
    pub rhs_exact: f64,
    /// Fraction of soups with a trajectory crossing from `B_r` to `B_4r^c`.
    pub rhs_mc: f64,
    pub rhs_stderr: f64,
    /// `u cap(B_r)`.
    pub u_cap: f64,
}

/// Estimates both sides of the crossing bound at level `-a` and radius `r`
/// from `n` field samples and `n` soups at `u = a^2 / 2`.
pub fn coupling_consequence<N: Network>(
    domain: &Domain<N>,
    obs_radius: usize,
    a: f64,
    r: usize,
    n: usize,
    seed: u64,
) -> Result<CouplingComparison, Error> {
    if 4 * r > obs_radius {
        return Err(Error::Set(format!(
            "4r = {} exceeds the window {obs_radius}",
            4 * r
        )));
    }
    let net = &domain.net;
    let o = net.origin();
    let inner = ball(net, o, r)?;
    let geom = Geometry::new(net, 4 * r);
    let mut explorer = Explorer::new(net.vertex_count());
    let mut crossed = 0u64;
    for i in 0..n as u64 {
        let key = SampleKey::new(seed, i);
        let field = gff::sample(domain, key);
        let cfg = open_edges(net, &field.values, -a, key);
        crossed += explorer
            .explore(&cfg, &geom, &inner, Censoring::Window, true)
            .touches_window as u64;
    }
    let u = a * a / 2.0;
    let ps = domain.equilibrium_measure(&inner)?;
    let mut soup_hits = 0u64;
    if u > 0.0 {
        for i in 0..n as u64 {
            let soup = sample_soup(net, &ps, u, SampleKey::new(seed ^ 0x5eed, i))?;
            soup_hits += soup
                .trajectories
                .iter()
                .any(|p| p.iter().any(|&x| geom.dist(x as usize) >= 4 * r))
                as u64;
        }
    }
    let nn = n as u64;
    Ok(CouplingComparison {
        a,
        r,
        u,
        lhs: crossed as f64 / n as f64,
        lhs_stderr: proportion_stderr(crossed, nn),
        rhs_exact: -(-u * ps.cap).exp_m1(),
        rhs_mc: soup_hits as f64 / n as f64,
        rhs_stderr: proportion_stderr(soup_hits, nn),
        u_cap: u * ps.cap,
    })
}
