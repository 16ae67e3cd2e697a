//! Monte Carlo experiments: configuration, estimate records, reference
//! values and the deterministic parallel driver.
//!
//! Every experiment returns a [`Report`]: an aggregate [`Summary`] of
//! [`EstimateRecord`]s and a tidy per-sample [`Table`]. Samples are indexed
//! and every random quantity is a function of `(seed, sample index)`, so the
//! output does not depend on the number of workers.

mod capacity;
mod field;
mod selftest;
mod soup;

use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{build_lattice, BoxLattice, LatticeSpec, WeightMode, WeightedGraph};
use crate::percolation::Censoring;
use crate::potential::Domain;
use crate::stats::{fmt_f64, normal_cdf};
use crate::Error;

pub use capacity::{
    capacity_density_mass, run_capacity_suite, run_com_inequality, run_diff_formula,
};
pub use field::{run_onearm, run_theta0, run_twopoint, run_volume};
pub use selftest::{run_gff_selftest, run_potential_selftest};
pub use soup::{emptiness_sets, run_locuniq};

/// `g(0, 0)` of the simple random walk on `Z^3` with unit weights, in the
/// weighted-Laplacian normalisation (`1 / cap({0})`), extrapolated from boxes
/// of half side 16, 32 and 64.
pub const G_REF: f64 = 0.252_730_556_085_390_2;

/// Names of the experiments, in the order run by `all`.
pub const EXPERIMENTS: [&str; 10] = [
    "potential-selftest",
    "gff-selftest",
    "theta0",
    "capacity",
    "onearm",
    "twopoint",
    "volume",
    "diffcheck",
    "cominequality",
    "locuniq",
];

/// Everything an experiment needs, after defaults are applied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lattice: LatticeSpec,
    /// Finest finite subdivision used for refined capacities.
    pub m: usize,
    pub a_grid: Vec<f64>,
    pub r_grid: Vec<usize>,
    pub u: f64,
    pub u_grid: Vec<f64>,
    pub b_grid: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
    pub workers: usize,
    /// Where the CLI writes outputs; not part of the serialised summary.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub censoring: Censoring,
    /// Comparisons pass when `|estimate - reference| <= k_sigma stderr + truncation_margin`.
    pub k_sigma: f64,
    pub truncation_margin: f64,
    /// Relative tolerance of the slope at criticality.
    pub slope_rel_tol: f64,
    /// Relative tolerance of the capacity-tail prefactor.
    pub prefactor_rel_tol: f64,
    /// Number of standard errors allowed per covariance entry in the sampler self-test.
    pub cov_sigma: f64,
    /// Number of standard errors allowed for the interlacement emptiness law.
    pub emptiness_sigma: f64,
    pub onearm_window: [f64; 2],
    pub twopoint_window: [f64; 2],
    pub kappa_window: [f64; 2],
    pub volume_tail_window: [f64; 2],
    pub min_r2: f64,
    /// Range of `N` for the capacity tail.
    pub tail_range: [f64; 2],
    /// Fewest exceedances for a tail point to count as reliable.
    pub tail_min_count: usize,
    /// Range of `n` for the volume tail.
    pub volume_range: [f64; 2],
    /// Range of distances for the two-point decay fit.
    pub twopoint_fit_range: [usize; 2],
    /// Largest distance of a two-point target; `0` means `L_obs / 2`.
    pub twopoint_max: usize,
    pub hist_bins: usize,
    pub batches: usize,
    pub r_k: usize,
    pub r0: usize,
    pub h: f64,
    pub lambda_factor: f64,
    /// Failure probability allowed once `u R^nu` reaches `locuniq_scale`.
    pub locuniq_threshold: f64,
    pub locuniq_scale: f64,
    /// Radius of the tabulated Green patch used for cluster capacities.
    pub patch_radius: usize,
    pub dense_limit: usize,
}

impl ExperimentConfig {
    /// Defaults on a lattice spec: `m = 1`, `n = 10^4`.
    pub fn new(lattice: LatticeSpec, seed: u64) -> Self {
        let l_obs = lattice.obs_radius;
        Self {
            lattice,
            m: 1,
            a_grid: vec![-1.0, -0.5, -0.2, -0.1, 0.0, 0.2, 0.5],
            r_grid: [4, 6, 8, 12, 16]
                .into_iter()
                .filter(|&r| r <= l_obs)
                .collect(),
            u: 0.5,
            u_grid: vec![0.2, 0.5, 1.0],
            b_grid: vec![0.1, 0.2, 0.3],
            n_samples: 10_000,
            seed,
            workers: 1,
            out_dir: PathBuf::from("out"),
            censoring: Censoring::Boundary,
            k_sigma: 3.0,
            truncation_margin: 0.02,
            slope_rel_tol: 0.15,
            prefactor_rel_tol: 0.25,
            cov_sigma: 5.0,
            emptiness_sigma: 4.0,
            onearm_window: [-0.65, -0.35],
            twopoint_window: [-1.35, -0.7],
            kappa_window: [0.4, 0.6],
            volume_tail_window: [-0.35, -0.12],
            min_r2: 0.98,
            tail_range: [20.0, 200.0],
            tail_min_count: 100,
            volume_range: [10.0, 1000.0],
            twopoint_fit_range: [2, 10],
            twopoint_max: 0,
            hist_bins: 12,
            batches: 20,
            r_k: (l_obs / 2).max(1),
            r0: (l_obs / 4).max(1),
            h: 0.05,
            lambda_factor: 4.0,
            locuniq_threshold: 0.05,
            locuniq_scale: 20.0,
            patch_radius: l_obs.min(6),
            dense_limit: 400,
        }
    }

    /// Checks the invariants shared by all experiments.
    pub fn validate(&self) -> Result<(), Error> {
        self.lattice.validate()?;
        let l_obs = self.lattice.obs_radius;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_samples < 1 {
            return bad("n_samples must be at least 1".into());
        }
        if self.m < 1 {
            return Err(Error::Subdivision);
        }
        if self.workers < 1 {
            return bad("workers must be at least 1".into());
        }
        if let Some(r) = self.r_grid.iter().find(|&&r| r > l_obs) {
            return bad(format!(
                "r_grid entry {r} exceeds the observation radius {l_obs}"
            ));
        }
        if self
            .a_grid
            .iter()
            .chain(&self.u_grid)
            .chain(&self.b_grid)
            .any(|x| !x.is_finite())
        {
            return bad("grids must be finite".into());
        }
        if self.u_grid.iter().any(|&u| u < 0.0) || !(self.u >= 0.0) {
            return bad("interlacement levels must be nonnegative".into());
        }
        if self.b_grid.iter().any(|&b| b <= 0.0) {
            return bad("b_grid entries must be positive".into());
        }
        if self.r_k > l_obs || self.r0 > self.r_k || self.r0 == 0 {
            return bad(format!(
                "need 1 <= r0 <= r_k <= L_obs, got r0 = {}, r_k = {}",
                self.r0, self.r_k
            ));
        }
        if self.twopoint_max > l_obs / 2 {
            return bad(format!(
                "twopoint_max {} exceeds L_obs / 2 = {}",
                self.twopoint_max,
                l_obs / 2
            ));
        }
        if !(self.h > 0.0)
            || !(self.lambda_factor >= 1.0)
            || !(self.k_sigma >= 0.0)
            || !(self.truncation_margin >= 0.0)
        {
            return bad("h, lambda_factor, k_sigma and truncation_margin must be positive".into());
        }
        if self.batches < 2 || self.hist_bins < 1 {
            return bad("batches must be at least 2 and hist_bins at least 1".into());
        }
        if !(self.tail_range[0] > 0.0 && self.tail_range[0] < self.tail_range[1])
            || !(self.volume_range[0] >= 1.0 && self.volume_range[0] < self.volume_range[1])
        {
            return bad("tail ranges must be increasing and positive".into());
        }
        Ok(())
    }

    /// `nu` of the lattice.
    pub fn nu(&self) -> f64 {
        self.lattice.exponents().0
    }

    /// Hash of the settings that determine the output (not the worker count
    /// or the output directory).
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = 1;
        c.out_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serialises");
        // FNV-1a.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// Correlation length `xi(a) = |a|^(-2 / nu)`, infinite at `a = 0`.
pub fn xi(a: f64, nu: f64) -> f64 {
    if a == 0.0 {
        f64::INFINITY
    } else {
        a.abs().powf(-2.0 / nu)
    }
}

/// `P(phi_0 >= 0, cluster bounded)` type reference: `2 Phi(a ^ 0)` for a
/// centered normal of variance `g`.
pub fn theta0_reference(a: f64, g: f64) -> f64 {
    2.0 * normal_cdf(a.min(0.0), g)
}

/// `E[exp(-u cap) 1{bounded}] = Phi(a) + 1 - Phi(sqrt(2u + a^2))`.
pub fn laplace_reference(a: f64, u: f64, g: f64) -> f64 {
    normal_cdf(a, g) + 1.0 - normal_cdf((2.0 * u + a * a).sqrt(), g)
}

/// Where a reference value comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// A closed-form expression.
    ExactFormula,
    /// A deterministic linear solve.
    ExactSolve,
    None,
}

/// One estimate with its uncertainty and, when available, a reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub estimate: f64,
    pub stderr: f64,
    pub n: u64,
    pub reference: Option<f64>,
    pub provenance: Provenance,
    /// Interval the estimate must fall in for the comparison to pass.
    pub accept: Option<[f64; 2]>,
    pub pass: Option<bool>,
    pub flag: Option<String>,
    pub config_hash: String,
    pub seed: u64,
}

impl EstimateRecord {
    pub fn new(name: &str, estimate: f64, stderr: f64, n: u64) -> Self {
        Self {
            name: name.into(),
            params: BTreeMap::new(),
            estimate,
            stderr: if stderr.is_nan() {
                stderr
            } else {
                stderr.max(0.0)
            },
            n,
            reference: None,
            provenance: Provenance::None,
            accept: None,
            pass: None,
            flag: None,
            config_hash: String::new(),
            seed: 0,
        }
    }

    pub fn param(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.into(), value);
        self
    }

    /// Reference without a verdict.
    pub fn reference(mut self, value: f64, provenance: Provenance) -> Self {
        self.reference = Some(value);
        self.provenance = provenance;
        self
    }

    /// Passes when `|estimate - value| <= tol`.
    pub fn against(self, value: f64, provenance: Provenance, tol: f64) -> Self {
        self.reference(value, provenance)
            .within([value - tol, value + tol])
    }

    /// Passes when the estimate lies in `[lo, hi]`.
    pub fn within(mut self, window: [f64; 2]) -> Self {
        self.accept = Some(window);
        self.pass = Some(self.estimate >= window[0] && self.estimate <= window[1]);
        self
    }

    /// Sets the verdict directly.
    pub fn verdict(mut self, pass: bool) -> Self {
        self.pass = Some(pass);
        self
    }

    pub fn flag(mut self, text: &str) -> Self {
        self.flag = Some(text.into());
        self
    }

    /// Looks up a parameter.
    pub fn get(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuildInfo {
    pub package: String,
    pub version: String,
}

impl Default for BuildInfo {
    fn default() -> Self {
        Self {
            package: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

/// Aggregate output of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: String,
    pub config: ExperimentConfig,
    pub records: Vec<EstimateRecord>,
    pub build_info: BuildInfo,
}

impl Summary {
    /// JSON text with every float written with 17 significant digits and
    /// non-finite values as `null`.
    pub fn to_json(&self) -> String {
        let mut out = Vec::new();
        let mut ser = serde_json::Serializer::with_formatter(&mut out, Fixed17::default());
        self.serialize(&mut ser).expect("summary serialises");
        out.push(b'\n');
        String::from_utf8(out).expect("utf-8")
    }

    /// Records whose comparison failed.
    pub fn failures(&self) -> impl Iterator<Item = &EstimateRecord> {
        self.records.iter().filter(|r| r.pass == Some(false))
    }

    /// Records called `name`.
    pub fn named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a EstimateRecord> + 'a {
        self.records.iter().filter(move |r| r.name == name)
    }
}

/// Pretty JSON formatter with fixed-precision floats.
#[derive(Default)]
struct Fixed17 {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

macro_rules! forward {
    ($($name:ident($($arg:ident: $ty:ty),*);)*) => {
        $(fn $name<W: ?Sized + std::io::Write>(&mut self, w: &mut W $(, $arg: $ty)*) -> std::io::Result<()> {
            self.inner.$name(w $(, $arg)*)
        })*
    };
}

impl serde_json::ser::Formatter for Fixed17 {
    fn write_f64<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        value: f64,
    ) -> std::io::Result<()> {
        w.write_all(fmt_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + std::io::Write>(
        &mut self,
        w: &mut W,
        value: f32,
    ) -> std::io::Result<()> {
        self.write_f64(w, value as f64)
    }

    forward! {
        begin_array();
        end_array();
        begin_array_value(first: bool);
        end_array_value();
        begin_object();
        end_object();
        begin_object_key(first: bool);
        begin_object_value();
        end_object_value();
    }
}

/// A tidy table written as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comma-separated text with a header row and LF endings.
    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// One row per record: name, parameters, estimate and verdict.
    pub fn from_records(records: &[EstimateRecord]) -> Self {
        let mut t = Table::new(&[
            "name",
            "params",
            "estimate",
            "stderr",
            "n",
            "reference",
            "pass",
        ]);
        for r in records {
            let params: Vec<String> = r
                .params
                .iter()
                .map(|(k, v)| format!("{k}={}", fmt_f64(*v)))
                .collect();
            t.push(vec![
                r.name.clone(),
                params.join(";"),
                fmt_f64(r.estimate),
                fmt_f64(r.stderr),
                r.n.to_string(),
                r.reference.map(fmt_f64).unwrap_or_default(),
                r.pass.map(|p| p.to_string()).unwrap_or_default(),
            ]);
        }
        t
    }
}

/// Summary and per-sample table of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub summary: Summary,
    pub samples: Table,
}

impl Report {
    fn new(
        experiment: &str,
        cfg: &ExperimentConfig,
        mut records: Vec<EstimateRecord>,
        samples: Table,
    ) -> Self {
        let hash = cfg.hash();
        for r in &mut records {
            r.config_hash = hash.clone();
            r.seed = cfg.seed;
        }
        Report {
            summary: Summary {
                experiment: experiment.into(),
                config: cfg.clone(),
                records,
                build_info: BuildInfo::default(),
            },
            samples,
        }
    }

    /// Whether every comparison with a verdict passed.
    pub fn passed(&self) -> bool {
        self.summary.failures().next().is_none()
    }
}

/// Runs the experiment called `name`.
pub fn run(name: &str, cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    match name {
        "theta0" => run_theta0(cfg),
        "capacity" => run_capacity_suite(cfg),
        "onearm" => run_onearm(cfg),
        "twopoint" => run_twopoint(cfg),
        "volume" => run_volume(cfg),
        "diffcheck" => run_diff_formula(cfg),
        "cominequality" => run_com_inequality(cfg),
        "locuniq" => run_locuniq(cfg),
        "potential-selftest" => run_potential_selftest(cfg),
        "gff-selftest" => run_gff_selftest(cfg),
        other => Err(Error::Config(format!("unknown experiment {other}"))),
    }
}

/// The sampling domain of a lattice spec: the sine-transform backend for
/// unit weights, a sparse factorisation otherwise.
pub enum Rig {
    Lattice(Domain<BoxLattice>),
    Graph(Domain<WeightedGraph>),
}

impl Rig {
    pub fn new(spec: &LatticeSpec) -> Result<Self, Error> {
        spec.validate()?;
        Ok(match spec.weight_mode {
            WeightMode::Unit => Rig::Lattice(Domain::spectral(BoxLattice::from_spec(spec))),
            _ => Rig::Graph(Domain::direct(build_lattice(spec)?)?),
        })
    }
}

/// Evaluates `$body` with `$d` bound to the domain of a [`Rig`].
macro_rules! with_domain {
    ($rig:expr, $d:ident => $body:expr) => {
        match $rig {
            $crate::experiments::Rig::Lattice($d) => $body,
            $crate::experiments::Rig::Graph($d) => $body,
        }
    };
}
pub(crate) use with_domain;

/// Maps sample indices `0..n` through `f` on `workers` threads, returning the
/// results in index order. `init` builds per-thread scratch space.
pub(crate) fn sample_map<S, T, I, F>(
    n: usize,
    workers: usize,
    init: I,
    f: F,
) -> Result<Vec<T>, Error>
where
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> Result<T, Error> + Sync + Send,
{
    let job = || {
        (0..n as u64)
            .into_par_iter()
            .map_init(&init, |s, i| f(s, i))
            .collect::<Result<Vec<T>, Error>>()
    };
    if workers <= 1 {
        let mut s = init();
        return (0..n as u64).map(|i| f(&mut s, i)).collect();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?
        .install(job)
}

/// Log-spaced grid of `k >= 2` points from `lo` to `hi`.
pub(crate) fn log_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64))
        .collect()
}

/// Sorted, deduplicated copy of a level grid.
pub(crate) fn sorted_levels(grid: &[f64]) -> Vec<f64> {
    let mut v = grid.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
