//! Edge opening, clusters of the origin and their observables.
//!
//! Given a field sample `phi` and a level `a`, the edge `{x, y}` is open with
//! probability `1 - exp(-2 lambda_xy (phi_x - a)_+ (phi_y - a)_+)`, which is
//! the probability that the Brownian bridge along the cable stays above `a`.
//! The decision compares that probability with one uniform per edge, shared
//! by all levels, so the open set decreases pointwise in `a`.
//!
//! For a closed edge leaving a cluster, the cable cluster still contains the
//! piece of the cable up to the first point where the bridge hits `a`. Its
//! length is sampled exactly (see [`sample_tip`]); a refinement of the edge
//! into `m` segments sees the tip rounded down to a multiple of `1/m`.

use rand::Rng;
use rand_distr::{Distribution, InverseGaussian, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::graph::{bfs_distances, Network};
use crate::potential::{
    set_capacity, CablePoint, ConductanceChange, GreenPatch, HarmonicWorkspace, SOLVER_TOL,
};
use crate::rng::{combine, CounterUniform, Purpose, SampleKey};
use crate::Error;

/// `1 - exp(-2 lambda (phi_x - a)_+ (phi_y - a)_+)`.
#[inline]
pub fn open_probability(lambda: f64, phi_x: f64, phi_y: f64, a: f64) -> f64 {
    let s = (phi_x - a).max(0.0) * (phi_y - a).max(0.0);
    -(-2.0 * lambda * s).exp_m1()
}

/// Open edges of one field sample at one level.
///
/// Openness is evaluated lazily from the shared uniform sheet, unless the
/// configuration was built from an explicit edge list.
pub struct EdgeConfig<'a, N: Network> {
    pub net: &'a N,
    pub values: &'a [f64],
    pub a: f64,
    pub key: SampleKey,
    sheet: CounterUniform,
    forced: Option<Vec<(usize, usize)>>,
}

/// Builds the edge configuration of `values` at level `a`; the uniform sheet
/// is a function of `key` only.
pub fn open_edges<'a, N: Network>(
    net: &'a N,
    values: &'a [f64],
    a: f64,
    key: SampleKey,
) -> EdgeConfig<'a, N> {
    EdgeConfig {
        net,
        values,
        a,
        key,
        sheet: CounterUniform::new(key.stream(Purpose::EdgeUniform)),
        forced: None,
    }
}

impl<'a, N: Network> EdgeConfig<'a, N> {
    /// A configuration whose open edges are exactly `open` (unordered pairs).
    pub fn from_open_set(net: &'a N, values: &'a [f64], a: f64, open: &[(usize, usize)]) -> Self {
        let mut list: Vec<(usize, usize)> =
            open.iter().map(|&(x, y)| (x.min(y), x.max(y))).collect();
        list.sort_unstable();
        list.dedup();
        let key = SampleKey::new(0, 0);
        EdgeConfig {
            net,
            values,
            a,
            key,
            sheet: CounterUniform::new(0),
            forced: Some(list),
        }
    }

    /// Same field and uniform sheet at another level.
    pub fn at_level(&self, a: f64) -> Self {
        EdgeConfig {
            a,
            forced: self.forced.clone(),
            ..*self
        }
    }

    /// The uniform attached to the edge `{x, y}`.
    #[inline]
    pub fn uniform(&self, x: usize, y: usize) -> f64 {
        self.sheet.pair(x, y)
    }

    #[inline]
    pub fn is_open(&self, x: usize, y: usize, lambda: f64) -> bool {
        if let Some(list) = &self.forced {
            return list.binary_search(&(x.min(y), x.max(y))).is_ok();
        }
        let (px, py) = (self.values[x], self.values[y]);
        if px < self.a || py < self.a {
            return false;
        }
        self.uniform(x, y) < open_probability(lambda, px, py, self.a)
    }

    /// All open edges `(x, y)` with `x < y`, sorted.
    pub fn open_edge_list(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for x in 0..self.net.vertex_count() {
            self.net.for_each_neighbor(x, |y, w| {
                if x < y && self.is_open(x, y, w) {
                    out.push((x, y));
                }
            });
        }
        out.sort_unstable();
        out
    }
}

impl<N: Network> Clone for EdgeConfig<'_, N> {
    fn clone(&self) -> Self {
        self.at_level(self.a)
    }
}

/// How a cluster is declared unbounded in a finite box.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Censoring {
    /// Unbounded iff the cluster reaches the Dirichlet layer of the box.
    #[default]
    Boundary,
    /// Unbounded iff the cluster reaches graph distance `L_obs` from the origin.
    Window,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundedness {
    Bounded,
    /// Counted as unbounded under the censoring policy in use.
    Censored,
}

/// Refinement level at which a cluster capacity is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subdivision {
    Finite(usize),
    /// The cable system itself (`m = infinity`).
    Cable,
}

impl Subdivision {
    /// Tip fraction seen at this refinement.
    #[inline]
    pub fn fraction(self, f: f64) -> f64 {
        match self {
            Subdivision::Finite(m) => (f * m as f64).floor() / m as f64,
            Subdivision::Cable => f,
        }
    }

    fn order(self) -> usize {
        match self {
            Subdivision::Finite(m) => m,
            Subdivision::Cable => usize::MAX,
        }
    }

    pub fn label(self) -> String {
        match self {
            Subdivision::Finite(m) => m.to_string(),
            Subdivision::Cable => "inf".into(),
        }
    }
}

/// The cluster of the origin at one level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub a: f64,
    pub phi0: f64,
    /// Vertices of the cluster in exploration order (origin first). For a
    /// censored cluster the exploration stops early and this is partial.
    pub vertices: Vec<usize>,
    pub bounded: Boundedness,
    pub touches_window: bool,
    pub reaches_boundary: bool,
    /// `max d(0, x)` over the cluster; `None` for the empty cluster.
    pub radius: Option<usize>,
    pub volume: usize,
    /// Whether the exploration ran to completion.
    pub complete: bool,
    pub cap_discrete: Option<f64>,
    pub cap_refined: Vec<(Subdivision, f64)>,
}

impl ClusterResult {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded == Boundedness::Bounded
    }

    /// Capacity at refinement `s`, if computed.
    pub fn cap_at(&self, s: Subdivision) -> Option<f64> {
        self.cap_refined.iter().find(|(t, _)| *t == s).map(|p| p.1)
    }
}

/// Distances from the origin and the observation radius.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub dist0: Vec<u32>,
    pub obs_radius: usize,
}

impl Geometry {
    pub fn new<N: Network>(net: &N, obs_radius: usize) -> Self {
        let dist0 = bfs_distances(net, net.origin(), None)
            .into_iter()
            .map(|d| if d == usize::MAX { u32::MAX } else { d as u32 })
            .collect();
        Self { dist0, obs_radius }
    }

    #[inline]
    pub fn dist(&self, x: usize) -> usize {
        self.dist0[x] as usize
    }
}

/// Outcome of a multi-source exploration.
#[derive(Clone, Debug, Default)]
pub struct Exploration {
    pub vertices: Vec<usize>,
    pub reaches_boundary: bool,
    pub touches_window: bool,
    pub max_dist: usize,
    pub complete: bool,
}

/// Reusable breadth-first explorer over open edges.
pub struct Explorer {
    stamp: Vec<u32>,
    current: u32,
    queue: Vec<usize>,
}

impl Explorer {
    pub fn new(n: usize) -> Self {
        Self {
            stamp: vec![0; n],
            current: 0,
            queue: Vec::new(),
        }
    }

    fn next_stamp(&mut self) -> u32 {
        self.current = self.current.wrapping_add(1);
        if self.current == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.current = 1;
        }
        self.current
    }

    /// Whether `x` was reached by the last exploration.
    #[inline]
    pub fn reached(&self, x: usize) -> bool {
        self.stamp[x] == self.current
    }

    /// Explores the union of the open clusters of `sources` (interior
    /// vertices with `phi >= a`). Boundary vertices are recorded as reached
    /// but not expanded. With `stop_when_censored` the search ends as soon as
    /// the censoring event occurs.
    pub fn explore<N: Network>(
        &mut self,
        cfg: &EdgeConfig<N>,
        geom: &Geometry,
        sources: &[usize],
        censoring: Censoring,
        stop_when_censored: bool,
    ) -> Exploration {
        let s = self.next_stamp();
        let net = cfg.net;
        let mut out = Exploration {
            complete: true,
            ..Default::default()
        };
        self.queue.clear();
        for &x in sources {
            if self.stamp[x] != s && !net.is_boundary(x) && cfg.values[x] >= cfg.a {
                self.stamp[x] = s;
                self.queue.push(x);
            }
        }
        let mut head = 0;
        let censored = |o: &Exploration| match censoring {
            Censoring::Boundary => o.reaches_boundary,
            Censoring::Window => o.touches_window,
        };
        for &x in &self.queue {
            out.max_dist = out.max_dist.max(geom.dist(x));
            out.touches_window |= geom.dist(x) >= geom.obs_radius;
        }
        if stop_when_censored && censored(&out) {
            out.complete = false;
            out.vertices = std::mem::take(&mut self.queue);
            return out;
        }
        while head < self.queue.len() {
            let x = self.queue[head];
            head += 1;
            let stamp = &mut self.stamp;
            let queue = &mut self.queue;
            let mut stop = false;
            net.for_each_interior_neighbor(x, |y, w| {
                if stop || stamp[y] == s || !cfg.is_open(x, y, w) {
                    return;
                }
                stamp[y] = s;
                if net.is_boundary(y) {
                    out.reaches_boundary = true;
                } else {
                    let dy = geom.dist(y);
                    out.max_dist = out.max_dist.max(dy);
                    out.touches_window |= dy >= geom.obs_radius;
                    queue.push(y);
                }
                if stop_when_censored && censored(&out) {
                    stop = true;
                }
            });
            if stop {
                out.complete = false;
                break;
            }
        }
        out.vertices = std::mem::take(&mut self.queue);
        out
    }
}

/// Explores the cluster of the origin.
pub fn cluster_of_origin<N: Network>(
    cfg: &EdgeConfig<N>,
    geom: &Geometry,
    censoring: Censoring,
    explorer: &mut Explorer,
) -> ClusterResult {
    let o = cfg.net.origin();
    let phi0 = cfg.values[o];
    let ex = explorer.explore(cfg, geom, &[o], censoring, true);
    let bounded = match censoring {
        Censoring::Boundary if ex.reaches_boundary => Boundedness::Censored,
        Censoring::Window if ex.touches_window => Boundedness::Censored,
        _ => Boundedness::Bounded,
    };
    let empty = ex.vertices.is_empty();
    ClusterResult {
        a: cfg.a,
        phi0,
        volume: ex.vertices.len(),
        radius: (!empty).then_some(ex.max_dist),
        vertices: ex.vertices,
        bounded,
        touches_window: ex.touches_window,
        reaches_boundary: ex.reaches_boundary,
        complete: ex.complete,
        cap_discrete: None,
        cap_refined: Vec::new(),
    }
}

/// A connection event evaluated on one configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// `r <= rad(K^a) < infinity`.
    Radius { r: usize },
    /// `x in K^a` and `K^a` bounded.
    Vertex { x: usize },
    /// `B_inner` connected to the inner boundary of `B_outer`, but not to
    /// infinity.
    BallToSphere { inner: usize, outer: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Indicator {
    pub target: Target,
    pub hit: bool,
    /// The underlying cluster (or union of clusters) is censored.
    pub censored: bool,
}

/// Evaluates connection indicators for the origin cluster `cluster` of `cfg`.
pub fn connection_events<N: Network>(
    cfg: &EdgeConfig<N>,
    geom: &Geometry,
    censoring: Censoring,
    cluster: &ClusterResult,
    targets: &[Target],
    explorer: &mut Explorer,
) -> Result<Vec<Indicator>, Error> {
    for t in targets {
        let r = match *t {
            Target::Radius { r } => r,
            Target::Vertex { x } => geom.dist(x),
            Target::BallToSphere { inner, outer } => inner.max(outer),
        };
        if r > geom.obs_radius {
            return Err(Error::Set(format!(
                "target radius {r} exceeds the window {}",
                geom.obs_radius
            )));
        }
    }
    let mut members: Option<Vec<usize>> = None;
    targets
        .iter()
        .map(|&target| {
            let censored = !cluster.is_bounded();
            let hit = match target {
                Target::Radius { r } => !censored && cluster.radius.is_some_and(|rad| rad >= r),
                Target::Vertex { x } => {
                    !censored && {
                        let m = members.get_or_insert_with(|| {
                            let mut v = cluster.vertices.clone();
                            v.sort_unstable();
                            v
                        });
                        m.binary_search(&x).is_ok()
                    }
                }
                Target::BallToSphere { inner, outer } => {
                    let (hit, censored) =
                        ball_to_sphere(cfg, geom, censoring, inner, outer, explorer)?;
                    return Ok(Indicator {
                        target,
                        hit,
                        censored,
                    });
                }
            };
            Ok(Indicator {
                target,
                hit,
                censored,
            })
        })
        .collect()
}

/// `{B_inner <-> inner boundary of B_outer}` without `{B_inner <-> infinity}`.
/// Returns `(event, censored)`.
pub fn ball_to_sphere<N: Network>(
    cfg: &EdgeConfig<N>,
    geom: &Geometry,
    censoring: Censoring,
    inner: usize,
    outer: usize,
    explorer: &mut Explorer,
) -> Result<(bool, bool), Error> {
    if inner > outer {
        return Err(Error::Set(format!(
            "inner radius {inner} exceeds outer radius {outer}"
        )));
    }
    let sources: Vec<usize> = (0..cfg.net.vertex_count())
        .filter(|&x| geom.dist(x) <= inner)
        .collect();
    let ex = explorer.explore(cfg, geom, &sources, censoring, true);
    let censored = match censoring {
        Censoring::Boundary => ex.reaches_boundary,
        Censoring::Window => ex.touches_window,
    };
    Ok((
        !censored && !ex.vertices.is_empty() && ex.max_dist >= outer,
        censored,
    ))
}

/// A closed edge leaving a cluster and the fraction of its cable, measured
/// from the inside vertex, that belongs to the cable cluster.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tip {
    pub inside: usize,
    pub outside: usize,
    pub lambda: f64,
    pub f: f64,
}

/// Samples the first time at which the cable bridge from `x` (value
/// `phi_x >= a`) towards `y` hits level `a`, conditionally on hitting, as a
/// fraction of the cable.
///
/// Reflecting the bridge after its first hitting time maps bridges from
/// `alpha = phi_x - a` to `beta = phi_y - a` that hit zero onto all bridges
/// from `alpha` to `-|beta|`, so the conditional hitting time is the
/// unconditional hitting time of the latter. With `T = 1 / lambda`, the bridge
/// hits zero at `t = s T / (T + s)` where `s` is the hitting time of zero by a
/// Brownian motion from `alpha` with drift `-|beta| / T`.
pub fn sample_tip<R: Rng>(lambda: f64, phi_x: f64, phi_y: f64, a: f64, rng: &mut R) -> f64 {
    let alpha = phi_x - a;
    if alpha <= 0.0 {
        return 0.0;
    }
    let t_total = 1.0 / lambda;
    let drift = (phi_y - a).abs() / t_total;
    let s = if drift == 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        alpha * alpha / (z * z)
    } else {
        match InverseGaussian::new(alpha / drift, alpha * alpha) {
            Ok(ig) => ig.sample(rng),
            Err(_) => 0.0,
        }
    };
    if !s.is_finite() {
        return 1.0 - f64::EPSILON;
    }
    (s / (t_total + s)).min(1.0 - f64::EPSILON)
}

/// Tips on every edge from the bounded cluster `set` to its complement.
///
/// `inside(x)` must report membership of the cluster. Tips are a function of
/// the sample key, the level and the oriented edge.
pub fn cable_tips<N: Network>(
    cfg: &EdgeConfig<N>,
    set: &[usize],
    inside: impl Fn(usize) -> bool,
) -> Vec<Tip> {
    let mut tips = Vec::new();
    let level = cfg.a.to_bits();
    for &x in set {
        cfg.net.for_each_interior_neighbor(x, |y, w| {
            if inside(y) {
                return;
            }
            let local = combine(combine(x as u64, y as u64), level);
            let mut rng = cfg.key.rng(Purpose::Bridge, local);
            let f = sample_tip(w, cfg.values[x], cfg.values[y], cfg.a, &mut rng);
            tips.push(Tip {
                inside: x,
                outside: y,
                lambda: w,
                f,
            });
        });
    }
    tips
}

/// Which linear-algebra route computes capacities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Dense route when the patch covers the set and it is small enough.
    Auto,
    /// Preconditioned CG over the whole domain.
    Sparse,
    /// Dense cable Green matrix on the points carrying equilibrium mass.
    Dense,
}

/// Computes capacities of clusters with their cable tips.
pub struct CapacityEngine<'a, N: Network> {
    net: &'a N,
    patch: Option<&'a GreenPatch>,
    /// Largest number of charged points handled by the dense route.
    pub dense_limit: usize,
    pub tol: f64,
    ws: HarmonicWorkspace,
    mark: Vec<bool>,
}

impl<'a, N: Network> CapacityEngine<'a, N> {
    pub fn new(net: &'a N, patch: Option<&'a GreenPatch>) -> Self {
        let n = net.vertex_count();
        Self {
            net,
            patch,
            dense_limit: 400,
            tol: SOLVER_TOL,
            ws: HarmonicWorkspace::new(n),
            mark: vec![false; n],
        }
    }

    /// Tips of a bounded cluster.
    pub fn tips(&mut self, cfg: &EdgeConfig<N>, set: &[usize]) -> Vec<Tip> {
        for &x in set {
            self.mark[x] = true;
        }
        let mark = &self.mark;
        let tips = cable_tips(cfg, set, |y| mark[y]);
        for &x in set {
            self.mark[x] = false;
        }
        tips
    }

    /// Capacity of `set` with the given tips at each requested refinement.
    pub fn capacities(
        &mut self,
        set: &[usize],
        tips: &[Tip],
        subdivisions: &[Subdivision],
        route: Route,
    ) -> Result<Vec<(Subdivision, f64)>, Error> {
        let mut order: Vec<Subdivision> = subdivisions.to_vec();
        order.sort_by_key(|s| s.order());
        let mut out = Vec::with_capacity(order.len());
        let mut warm = false;
        for s in order {
            let dense_ok = self.patch.is_some_and(|p| {
                tips.iter()
                    .all(|t| p.covers(t.inside) && p.covers(t.outside))
            });
            let use_dense = match route {
                Route::Dense => {
                    if !dense_ok {
                        return Err(Error::Set(
                            "cluster is not covered by the Green patch".into(),
                        ));
                    }
                    true
                }
                Route::Sparse => false,
                Route::Auto => dense_ok && charged_points(tips, s).len() <= self.dense_limit,
            };
            let cap = if use_dense {
                self.patch
                    .expect("checked")
                    .capacity(&charged_points(tips, s))?
            } else {
                let changes: Vec<ConductanceChange> = tips
                    .iter()
                    .filter_map(|t| {
                        let f = s.fraction(t.f);
                        (f > 0.0).then(|| ConductanceChange {
                            inside: t.inside,
                            outside: t.outside,
                            conductance: t.lambda / (1.0 - f),
                        })
                    })
                    .collect();
                let sol = set_capacity(self.net, set, &changes, &mut self.ws, warm, self.tol)?;
                warm = true;
                sol.cap
            };
            out.push((s, cap));
        }
        // Report in the order requested.
        Ok(subdivisions
            .iter()
            .map(|s| *out.iter().find(|(t, _)| t == s).expect("computed"))
            .collect())
    }
}

/// Points of the cable cluster that can carry equilibrium mass: tip ends,
/// and inside vertices with a closed edge leaving immediately.
fn charged_points(tips: &[Tip], s: Subdivision) -> Vec<CablePoint> {
    let mut bare: Vec<usize> = Vec::new();
    let mut pts = Vec::new();
    for t in tips {
        let f = s.fraction(t.f);
        if f > 0.0 {
            pts.push(CablePoint {
                x: t.inside,
                y: t.outside,
                f,
                lambda: t.lambda,
            });
        } else {
            bare.push(t.inside);
        }
    }
    bare.sort_unstable();
    bare.dedup();
    pts.extend(bare.into_iter().map(CablePoint::vertex));
    pts
}

/// Fills the capacity fields of a bounded, fully explored, nonempty cluster.
/// `cap_discrete` is the `m = 1` value.
pub fn cluster_capacity<N: Network>(
    cluster: &mut ClusterResult,
    cfg: &EdgeConfig<N>,
    engine: &mut CapacityEngine<N>,
    subdivisions: &[Subdivision],
    route: Route,
) -> Result<Vec<Tip>, Error> {
    if cluster.is_empty() {
        return Err(Error::Set("empty cluster has no capacity".into()));
    }
    if !cluster.is_bounded() || !cluster.complete {
        return Err(Error::Set(
            "capacity of a censored cluster is not reported".into(),
        ));
    }
    let tips = engine.tips(cfg, &cluster.vertices);
    let mut subs = subdivisions.to_vec();
    if !subs.contains(&Subdivision::Finite(1)) {
        subs.push(Subdivision::Finite(1));
    }
    let caps = engine.capacities(&cluster.vertices, &tips, &subs, route)?;
    cluster.cap_discrete = caps
        .iter()
        .find(|(s, _)| *s == Subdivision::Finite(1))
        .map(|p| p.1);
    cluster.cap_refined = caps
        .into_iter()
        .filter(|(s, _)| subdivisions.contains(s))
        .collect();
    Ok(tips)
}
