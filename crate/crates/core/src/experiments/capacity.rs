//! Experiments on the capacity of the cluster of the origin: its law, the
//! differential formula and the change-of-measure inequality.

use std::f64::consts::PI;

use crate::gff;
use crate::graph::{ball, Network};
use crate::percolation::{
    cluster_capacity, cluster_of_origin, open_edges, CapacityEngine, Censoring, Explorer, Geometry,
    Route, Subdivision,
};
use crate::potential::{Domain, GreenPatch};
use crate::rng::SampleKey;
use crate::stats::{fmt_f64, linear_fit, mean_stderr, normal_cdf, normal_pdf, ratio_batch_means};
use crate::Error;

use super::{
    laplace_reference, log_grid, sample_map, with_domain, EstimateRecord, ExperimentConfig,
    Provenance, Report, Rig, Table, G_REF,
};

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Mass that the capacity density
/// `rho_a(t) = (2 pi)^-1 t^-1 (g (t - 1/g))^-1/2 exp(-a^2 t / 2)`, `t > 1/g`,
/// puts on `[t1, t2]` (`t2` may be infinite).
///
/// With `t = sec^2(theta) / g` the density becomes
/// `pi^-1 exp(-a^2 / (2 g cos^2 theta)) d theta` on `(0, pi / 2)`.
pub fn capacity_density_mass(a: f64, g: f64, t1: f64, t2: f64) -> f64 {
    let angle = |t: f64| {
        if t.is_infinite() {
            PI / 2.0
        } else {
            (g * t - 1.0).max(0.0).sqrt().atan()
        }
    };
    let (th1, th2) = (angle(t1), angle(t2));
    if th2 <= th1 {
        return 0.0;
    }
    if a == 0.0 {
        return (th2 - th1) / PI;
    }
    let c = a * a / (2.0 * g);
    let f = |th: f64| {
        let cos = th.cos();
        if cos <= 0.0 {
            0.0
        } else {
            (-c / (cos * cos)).exp()
        }
    };
    simpson(&f, th1, th2, 1e-13) / PI
}

/// State of the origin cluster at one level, with its capacities.
#[derive(Clone, Debug)]
enum Outcome {
    Empty,
    Censored,
    Bounded(Vec<f64>),
}

impl Outcome {
    fn cap(&self, k: usize) -> Option<f64> {
        match self {
            Outcome::Bounded(c) => Some(c[k]),
            _ => None,
        }
    }
}

/// Dyadic refinements `1, 2, 4, ..., m` followed by the cable system.
fn subdivisions(m: usize) -> Vec<Subdivision> {
    let mut s: Vec<Subdivision> =
        std::iter::successors(Some(1usize), |&k| (k * 2 <= m).then_some(k * 2))
            .map(Subdivision::Finite)
            .collect();
    if !s.contains(&Subdivision::Finite(m)) {
        s.push(Subdivision::Finite(m));
    }
    s.push(Subdivision::Cable);
    s
}

/// Law of the cable capacity of the origin cluster: Laplace transform,
/// density, tail and tilting between levels.
pub fn run_capacity_suite(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    if cfg.m < 4 {
        return Err(Error::Config(format!(
            "capacity suite needs m >= 4, got {}",
            cfg.m
        )));
    }
    with_domain!(&Rig::new(&cfg.lattice)?, d => capacity_on(d, cfg))
}

fn capacity_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() {
        return Err(Error::Config(
            "capacity suite needs a nonempty a_grid".into(),
        ));
    }
    let net = &domain.net;
    let o = net.origin();
    let geom = Geometry::new(net, cfg.lattice.obs_radius);
    let patch = GreenPatch::new(domain, o, cfg.patch_radius.min(cfg.lattice.half_side - 1))?;
    let subs = subdivisions(cfg.m);
    let cable = subs.len() - 1;
    let n = cfg.n_samples;
    let nn = n as u64;
    let rows: Vec<Vec<Outcome>> = sample_map(
        n,
        cfg.workers,
        || {
            let mut engine = CapacityEngine::new(net, Some(&patch));
            engine.dense_limit = cfg.dense_limit;
            (Explorer::new(net.vertex_count()), engine)
        },
        |(ex, engine), i| {
            let key = SampleKey::new(cfg.seed, i);
            let field = gff::sample(domain, key);
            cfg.a_grid
                .iter()
                .map(|&a| {
                    let edges = open_edges(net, &field.values, a, key);
                    let mut c = cluster_of_origin(&edges, &geom, cfg.censoring, ex);
                    if c.is_empty() {
                        return Ok(Outcome::Empty);
                    }
                    if !c.is_bounded() {
                        return Ok(Outcome::Censored);
                    }
                    cluster_capacity(&mut c, &edges, engine, &subs, Route::Auto)?;
                    Ok(Outcome::Bounded(
                        c.cap_refined.iter().map(|p| p.1).collect(),
                    ))
                })
                .collect()
        },
    )?;
    let g_u = domain.green(o, o);
    let t0 = 1.0 / g_u;
    let mut records = Vec::new();
    let finest = subs.len() - 2;
    for (j, &a) in cfg.a_grid.iter().enumerate() {
        // Laplace transform.
        for &u in &cfg.u_grid {
            let reference = laplace_reference(a, u, g_u);
            let mut seq = Vec::new();
            for (k, s) in subs.iter().enumerate() {
                let v: Vec<f64> = rows
                    .iter()
                    .map(|r| match &r[j] {
                        Outcome::Empty => 1.0,
                        Outcome::Censored => 0.0,
                        Outcome::Bounded(c) => (-u * c[k]).exp(),
                    })
                    .collect();
                let (mean, se) = mean_stderr(&v);
                let rec = EstimateRecord::new("laplace", mean, se, nn)
                    .param("a", a)
                    .param("u", u)
                    .param("m", subdivision_param(*s))
                    .param("reference_g_ref", laplace_reference(a, u, G_REF));
                let rec = if k == finest || k == cable {
                    rec.against(
                        reference,
                        Provenance::ExactFormula,
                        cfg.k_sigma * se + cfg.truncation_margin,
                    )
                } else {
                    rec.reference(reference, Provenance::ExactFormula)
                };
                if k != cable {
                    seq.push(mean);
                }
                records.push(rec);
            }
            let monotone = seq.windows(2).all(|w| w[1] <= w[0]);
            let closer = (seq[seq.len() - 1] - reference).abs() <= (seq[0] - reference).abs();
            let mut rec = EstimateRecord::new("laplace_trend", seq[seq.len() - 1], f64::NAN, nn)
                .param("a", a)
                .param("u", u)
                .reference(reference, Provenance::ExactFormula)
                .verdict(monotone && closer);
            for (s, v) in subs.iter().zip(&seq) {
                rec = rec.param(&format!("m{}", s.label()), *v);
            }
            records.push(rec);
        }
        // Density of the cable capacity on geometric bins.
        let edges: Vec<f64> = (0..=cfg.hist_bins)
            .map(|k| t0 * 2f64.powf(k as f64 / 2.0))
            .collect();
        let bins: Vec<(f64, f64)> = edges
            .windows(2)
            .map(|w| (w[0], w[1]))
            .chain(std::iter::once((edges[cfg.hist_bins], f64::INFINITY)))
            .collect();
        let total = capacity_density_mass(a, g_u, t0, f64::INFINITY);
        records.push(
            EstimateRecord::new("density_mass", total, 0.0, 0)
                .param("a", a)
                .against(
                    1.0 - normal_cdf(a.abs(), g_u),
                    Provenance::ExactFormula,
                    1e-9,
                ),
        );
        for &(lo, hi) in &bins {
            let k = rows
                .iter()
                .filter(|r| r[j].cap(cable).is_some_and(|c| c >= lo && c < hi))
                .count();
            let p = k as f64 / n as f64;
            let reference = capacity_density_mass(a, g_u, lo, hi);
            let se_ref = (reference * (1.0 - reference) / n as f64).sqrt();
            records.push(
                EstimateRecord::new("density", p, (p * (1.0 - p) / n as f64).sqrt(), nn)
                    .param("a", a)
                    .param("t_lo", lo)
                    .param("t_hi", hi)
                    .against(reference, Provenance::ExactFormula, cfg.k_sigma * se_ref),
            );
        }
        // Tilting relative to level zero.
        if let Some(z) = cfg
            .a_grid
            .iter()
            .position(|&b| b == 0.0)
            .filter(|&z| z != j)
        {
            for &(lo, hi) in &bins {
                let ind = |k: usize| -> Vec<f64> {
                    rows.iter()
                        .map(|r| r[k].cap(cable).is_some_and(|c| c >= lo && c < hi) as u8 as f64)
                        .collect()
                };
                let (num, den) = (ind(j), ind(z));
                let mass_a = capacity_density_mass(a, g_u, lo, hi);
                let mass_0 = capacity_density_mass(0.0, g_u, lo, hi);
                let count_0: f64 = den.iter().sum();
                if count_0 < 20.0 || mass_a * (n as f64) < 10.0 {
                    continue;
                }
                let (ratio, se) = ratio_batch_means(&num, &den, cfg.batches);
                let t_mid = if hi.is_finite() { (lo * hi).sqrt() } else { lo };
                records.push(
                    EstimateRecord::new("tilting", ratio, se, nn)
                        .param("a", a)
                        .param("b", 0.0)
                        .param("t_lo", lo)
                        .param("t_hi", hi)
                        .param("tilt_at_mid", (-a * a * t_mid / 2.0).exp())
                        .against(mass_a / mass_0, Provenance::ExactFormula, cfg.k_sigma * se),
                );
            }
        }
    }
    // Tail of the capacity at level zero.
    if let Some(z) = cfg.a_grid.iter().position(|&a| a == 0.0) {
        let grid = log_grid(cfg.tail_range[0], cfg.tail_range[1], 8);
        let mut reliable = Vec::new();
        for &big_n in &grid {
            let k = rows
                .iter()
                .filter(|r| r[z].cap(cable).is_some_and(|c| c >= big_n))
                .count();
            let p = k as f64 / n as f64;
            let reference = capacity_density_mass(0.0, g_u, big_n, f64::INFINITY);
            let se_ref = (reference * (1.0 - reference) / n as f64).sqrt();
            records.push(
                EstimateRecord::new("capacity_tail", p, (p * (1.0 - p) / n as f64).sqrt(), nn)
                    .param("n_min", big_n)
                    .param("count", k as f64)
                    .against(reference, Provenance::ExactFormula, cfg.k_sigma * se_ref),
            );
            if k >= cfg.tail_min_count {
                reliable.push((big_n, p, k));
            }
        }
        if reliable.len() >= 2 {
            let lx: Vec<f64> = reliable.iter().map(|t| t.0.ln()).collect();
            let ly: Vec<f64> = reliable.iter().map(|t| t.1.ln()).collect();
            let f = linear_fit(&lx, &ly, None);
            let span = reliable.last().unwrap().0 / reliable[0].0;
            let mut rec = EstimateRecord::new("capacity_kappa", -f.slope, f.slope_stderr, nn)
                .param("n_lo", reliable[0].0)
                .param("n_hi", reliable.last().unwrap().0)
                .param("r2", f.r2)
                .reference(0.5, Provenance::ExactFormula)
                .within(cfg.kappa_window);
            if span < 10.0 * (1.0 - 1e-9) {
                rec = rec.flag("reliable range spans less than a decade");
            }
            records.push(rec);
            let &(big_n, p, k) = reliable.last().unwrap();
            let reference = 1.0 / (PI * G_REF.sqrt());
            records.push(
                EstimateRecord::new(
                    "capacity_prefactor",
                    big_n.sqrt() * p,
                    big_n.sqrt() * (p * (1.0 - p) / n as f64).sqrt(),
                    nn,
                )
                .param("n_min", big_n)
                .param("count", k as f64)
                .param("reference_g_u", 1.0 / (PI * g_u.sqrt()))
                .against(
                    reference,
                    Provenance::ExactFormula,
                    cfg.prefactor_rel_tol * reference,
                ),
            );
        } else {
            records.push(
                EstimateRecord::new("capacity_kappa", f64::NAN, f64::NAN, nn)
                    .flag("too few reliable tail points"),
            );
        }
    }
    let mut header = vec![
        "seed".to_string(),
        "sample".into(),
        "a".into(),
        "status".into(),
    ];
    header.extend(subs.iter().map(|s| format!("cap_{}", s.label())));
    let mut table = Table {
        header,
        rows: Vec::new(),
    };
    for (i, row) in rows.iter().enumerate() {
        for (&a, out) in cfg.a_grid.iter().zip(row) {
            let mut r = vec![cfg.seed.to_string(), i.to_string(), fmt_f64(a)];
            match out {
                Outcome::Empty => r.push("empty".into()),
                Outcome::Censored => r.push("censored".into()),
                Outcome::Bounded(_) => r.push("bounded".into()),
            }
            r.extend((0..subs.len()).map(|k| out.cap(k).map(fmt_f64).unwrap_or_default()));
            table.push(r);
        }
    }
    Ok(Report::new("capacity", cfg, records, table))
}

fn subdivision_param(s: Subdivision) -> f64 {
    match s {
        Subdivision::Finite(m) => m as f64,
        Subdivision::Cable => f64::INFINITY,
    }
}

/// One sample of the differential-formula experiment at one level `a`.
#[derive(Clone, Debug)]
struct DiffRow {
    /// Cluster inside the interior of `K` at `a - h`, `a`, `a + h`.
    in_k: [bool; 3],
    /// Radius of the cluster at each of the three levels.
    radius: [Option<usize>; 3],
    /// Cable capacity at level `a` when the cluster lies inside `K`.
    cap: Option<f64>,
}

/// Compares the central difference of `E[F 1{K^a inside K}]` with
/// `-a E[cap(K^a) F 1{K^a inside K}]` and with `-E[M_K F]`, for
/// `F = 1{nonempty}` and `F = 1{rad >= r0}`, plus the one-point case.
pub fn run_diff_formula(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    if cfg.r_k > cfg.lattice.obs_radius / 2 {
        return Err(Error::Config(format!(
            "r_k = {} exceeds L_obs / 2",
            cfg.r_k
        )));
    }
    with_domain!(&Rig::new(&cfg.lattice)?, d => diff_on(d, cfg))
}

fn diff_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() {
        return Err(Error::Config("diffcheck needs a nonempty a_grid".into()));
    }
    let net = &domain.net;
    let o = net.origin();
    let geom = Geometry::new(net, cfg.lattice.obs_radius);
    let patch = GreenPatch::new(
        domain,
        o,
        cfg.patch_radius.max(cfg.r_k).min(cfg.lattice.half_side - 1),
    )?;
    let k_ball = ball(net, o, cfg.r_k)?;
    let eq = domain.equilibrium_measure(&k_ball)?;
    let h = cfg.h;
    let n = cfg.n_samples;
    let nn = n as u64;
    let rows: Vec<(f64, f64, Vec<DiffRow>)> = sample_map(
        n,
        cfg.workers,
        || {
            let mut engine = CapacityEngine::new(net, Some(&patch));
            engine.dense_limit = cfg.dense_limit;
            (Explorer::new(net.vertex_count()), engine)
        },
        |(ex, engine), i| {
            let key = SampleKey::new(cfg.seed, i);
            let field = gff::sample(domain, key);
            let m_k = gff::cluster_functional_m(&field, &eq)?;
            let per_a = cfg
                .a_grid
                .iter()
                .map(|&a| {
                    let mut row = DiffRow {
                        in_k: [false; 3],
                        radius: [None; 3],
                        cap: None,
                    };
                    for (s, level) in [a - h, a, a + h].into_iter().enumerate() {
                        let edges = open_edges(net, &field.values, level, key);
                        let mut c = cluster_of_origin(&edges, &geom, Censoring::Boundary, ex);
                        let inside = !c.is_empty()
                            && c.is_bounded()
                            && c.radius.is_some_and(|r| r < cfg.r_k);
                        row.in_k[s] = inside;
                        row.radius[s] = c.radius;
                        if s == 1 && inside {
                            cluster_capacity(
                                &mut c,
                                &edges,
                                engine,
                                &[Subdivision::Cable],
                                Route::Auto,
                            )?;
                            row.cap = c.cap_at(Subdivision::Cable);
                        }
                    }
                    Ok(row)
                })
                .collect::<Result<Vec<_>, Error>>()?;
            Ok((field.values[o], m_k, per_a))
        },
    )?;
    let g_u = domain.green(o, o);
    let mut records = Vec::new();
    let r0 = cfg.r0;
    let functionals: [(&str, Box<dyn Fn(&DiffRow, usize) -> bool>); 2] = [
        ("nonempty", Box::new(|r: &DiffRow, s: usize| r.in_k[s])),
        (
            "radius",
            Box::new(move |r: &DiffRow, s: usize| {
                r.in_k[s] && r.radius[s].is_some_and(|x| x >= r0)
            }),
        ),
    ];
    for (j, &a) in cfg.a_grid.iter().enumerate() {
        for (fname, f) in &functionals {
            let fid = if *fname == "nonempty" { 0.0 } else { 1.0 };
            let fd: Vec<f64> = rows
                .iter()
                .map(|r| (f(&r.2[j], 2) as u8 as f64 - f(&r.2[j], 0) as u8 as f64) / (2.0 * h))
                .collect();
            let capside: Vec<f64> = rows
                .iter()
                .map(|r| {
                    if f(&r.2[j], 1) {
                        -a * r.2[j].cap.expect("capacity inside K")
                    } else {
                        0.0
                    }
                })
                .collect();
            let mside: Vec<f64> = rows
                .iter()
                .map(|r| if f(&r.2[j], 1) { -r.1 } else { 0.0 })
                .collect();
            let (fd_mean, fd_se) = mean_stderr(&fd);
            let (cap_mean, cap_se) = mean_stderr(&capside);
            let (m_mean, m_se) = mean_stderr(&mside);
            let base = |name: &str, est: f64, se: f64| {
                EstimateRecord::new(name, est, se, nn)
                    .param("a", a)
                    .param("h", h)
                    .param("r_k", cfg.r_k as f64)
                    .param("r0", r0 as f64)
                    .param("functional", fid)
            };
            records.push(base("diff_fd", fd_mean, fd_se));
            records.push(base("diff_cap", cap_mean, cap_se));
            records.push(base("diff_m", m_mean, m_se));
            let comb = (fd_se * fd_se + cap_se * cap_se).sqrt();
            let mut rec = base("diff_check", fd_mean - cap_mean, comb).against(
                0.0,
                Provenance::None,
                cfg.k_sigma * comb,
            );
            if fd_se > cap_mean.abs() && a != 0.0 {
                rec = rec.flag("finite-difference noise exceeds the derivative");
            }
            records.push(rec);
            let comb_m = (m_se * m_se + cap_se * cap_se).sqrt();
            records.push(base("diff_m_check", m_mean - cap_mean, comb_m).against(
                0.0,
                Provenance::None,
                cfg.k_sigma * comb_m,
            ));
        }
        // One point: F = 1{phi_0 >= a}, d/da E[F] = -f(a) = -E[(phi_0 / g) F].
        let fd: Vec<f64> = rows
            .iter()
            .map(|r| ((r.0 >= a + h) as u8 as f64 - (r.0 >= a - h) as u8 as f64) / (2.0 * h))
            .collect();
        let (fd_mean, fd_se) = mean_stderr(&fd);
        let exact_fd = (normal_cdf(a - h, g_u) - normal_cdf(a + h, g_u)) / (2.0 * h);
        records.push(
            EstimateRecord::new("lemma21_fd", fd_mean, fd_se, nn)
                .param("a", a)
                .param("h", h)
                .against(
                    exact_fd,
                    Provenance::ExactFormula,
                    cfg.k_sigma * fd_se.max(1.0 / (n as f64 * h)),
                ),
        );
        let ms: Vec<f64> = rows
            .iter()
            .map(|r| if r.0 >= a { -r.0 / g_u } else { 0.0 })
            .collect();
        let (m_mean, m_se) = mean_stderr(&ms);
        records.push(
            EstimateRecord::new("lemma21_m", m_mean, m_se, nn)
                .param("a", a)
                .against(
                    -normal_pdf(a, g_u),
                    Provenance::ExactFormula,
                    cfg.k_sigma * m_se,
                ),
        );
    }
    let mut table = Table::new(&[
        "seed",
        "sample",
        "a",
        "phi0",
        "m_k",
        "in_k_minus",
        "in_k",
        "in_k_plus",
        "radius",
        "cap_inf",
    ]);
    for (i, (phi0, m_k, per_a)) in rows.iter().enumerate() {
        for (&a, r) in cfg.a_grid.iter().zip(per_a) {
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(a),
                fmt_f64(*phi0),
                fmt_f64(*m_k),
                (r.in_k[0] as u8).to_string(),
                (r.in_k[1] as u8).to_string(),
                (r.in_k[2] as u8).to_string(),
                r.radius[1].map(|x| x.to_string()).unwrap_or_default(),
                r.cap.map(fmt_f64).unwrap_or_default(),
            ]);
        }
    }
    Ok(Report::new("diffcheck", cfg, records, table))
}

/// `P(K^{a+b}_K in B)` against the lower bound
/// `P(K^a_K in B) exp(-b^2 cap(K) / 2 - 2b (1 + (a ^ 0)^2 cap(K)) / (sqrt(2 pi g) P(K^a_K in B)))`
/// for `K = B(0, r_K)` and `B = {rad >= r0}`.
pub fn run_com_inequality(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => com_on(d, cfg))
}

fn com_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() || cfg.b_grid.is_empty() {
        return Err(Error::Config(
            "cominequality needs nonempty a_grid and b_grid".into(),
        ));
    }
    let net = &domain.net;
    let o = net.origin();
    let cap_k = domain.equilibrium_measure(&ball(net, o, cfg.r_k)?)?.cap;
    let g_u = domain.green(o, o);
    // Reaching distance r0 from the origin only involves the field inside B(0, r0).
    let geom = Geometry::new(net, cfg.r0);
    let mut levels: Vec<f64> = Vec::new();
    for &a in &cfg.a_grid {
        levels.push(a);
        levels.extend(cfg.b_grid.iter().map(|b| a + b));
    }
    let levels = super::sorted_levels(&levels);
    let n = cfg.n_samples;
    let nn = n as u64;
    let rows: Vec<Vec<bool>> = sample_map(
        n,
        cfg.workers,
        || Explorer::new(net.vertex_count()),
        |ex, i| {
            let key = SampleKey::new(cfg.seed, i);
            let field = gff::sample(domain, key);
            Ok(levels
                .iter()
                .map(|&l| {
                    let edges = open_edges(net, &field.values, l, key);
                    ex.explore(&edges, &geom, &[o], Censoring::Window, true)
                        .touches_window
                })
                .collect())
        },
    )?;
    let prob = |l: f64| -> (f64, f64) {
        let k = levels.iter().position(|&x| x == l).expect("level in grid");
        let v: Vec<f64> = rows.iter().map(|r| r[k] as u8 as f64).collect();
        mean_stderr(&v)
    };
    let mut records = Vec::new();
    for &a in &cfg.a_grid {
        let (p, se_p) = prob(a);
        for &b in &cfg.b_grid {
            let (left, se_l) = prob(a + b);
            let c = 2.0 * b * (1.0 + a.min(0.0).powi(2) * cap_k) / (2.0 * PI * g_u).sqrt();
            let (right, se_r) = if p > 0.0 {
                let e = (-(b * b) / 2.0 * cap_k - c / p).exp();
                (p * e, e * (1.0 + c / p) * se_p)
            } else {
                (0.0, 0.0)
            };
            let comb = (se_l * se_l + se_r * se_r).sqrt();
            let mut rec = EstimateRecord::new("com_margin", left - right, comb, nn)
                .param("a", a)
                .param("b", b)
                .param("left", left)
                .param("right", right)
                .param("p_a", p)
                .param("cap_k", cap_k)
                .param("r_k", cfg.r_k as f64)
                .param("r0", cfg.r0 as f64)
                .verdict(left >= right - cfg.k_sigma * comb);
            if p == 0.0 {
                rec = rec.flag("P(K^a_K in B) estimated as zero; right side degenerate");
            }
            records.push(rec);
        }
    }
    let mut table = Table::new(&["seed", "sample", "level", "reach_r0"]);
    for (i, row) in rows.iter().enumerate() {
        for (&l, &hit) in levels.iter().zip(row) {
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(l),
                (hit as u8).to_string(),
            ]);
        }
    }
    Ok(Report::new("cominequality", cfg, records, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeSpec;

    #[test]
    fn density_mass_identities() {
        let g = 0.25;
        // Normalisation: 1/2 at a = 0, 1 - Phi(|a|) in general.
        assert!((capacity_density_mass(0.0, g, 1.0 / g, f64::INFINITY) - 0.5).abs() < 1e-15);
        for a in [0.3, -0.7, 1.5] {
            let m = capacity_density_mass(a, g, 1.0 / g, f64::INFINITY);
            assert!(
                (m - (1.0 - normal_cdf(a.abs(), g))).abs() < 1e-10,
                "{a}: {m}"
            );
        }
        // Tail at a = 0 in closed form.
        let n = 50.0;
        let tail = capacity_density_mass(0.0, g, n, f64::INFINITY);
        assert!((tail - (1.0 / (g * n - 1.0).sqrt()).atan() / PI).abs() < 1e-15);
    }

    #[test]
    fn density_reproduces_laplace_transform() {
        // int exp(-u t) rho_a(t) dt + P(empty or bounded-empty part) = laplace reference.
        let (g, a, u) = (0.25, 0.3, 0.5);
        let t0 = 1.0 / g;
        let c = a * a / (2.0 * g);
        let f = |th: f64| {
            let cos = th.cos();
            if cos <= 0.0 {
                0.0
            } else {
                let t = 1.0 / (g * cos * cos);
                (-c / (cos * cos) - u * t).exp()
            }
        };
        let integral = simpson(&f, 0.0, PI / 2.0, 1e-13) / PI;
        // Empty cluster has probability Phi(a) for a >= 0.
        let lhs = normal_cdf(a, g) + integral;
        assert!((lhs - laplace_reference(a, u, g)).abs() < 1e-10);
        assert!(capacity_density_mass(a, g, t0, 2.0 * t0) > 0.0);
    }

    #[test]
    fn subdivision_ladder() {
        assert_eq!(
            subdivisions(8),
            vec![
                Subdivision::Finite(1),
                Subdivision::Finite(2),
                Subdivision::Finite(4),
                Subdivision::Finite(8),
                Subdivision::Cable
            ]
        );
        assert_eq!(subdivisions(6).len(), 5);
    }

    fn small(l: usize, n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(LatticeSpec::unit(3, l, l - 2), 3);
        cfg.n_samples = n;
        cfg.m = 4;
        cfg.patch_radius = 4;
        cfg
    }

    #[test]
    fn capacity_suite_on_a_small_box() {
        let mut cfg = small(6, 1500);
        cfg.a_grid = vec![0.0, 0.4];
        cfg.u_grid = vec![0.5];
        cfg.tail_range = [8.0, 40.0];
        cfg.tail_min_count = 20;
        let rep = run_capacity_suite(&cfg).unwrap();
        let fails: Vec<_> = rep.summary.failures().collect();
        assert!(fails.is_empty(), "{fails:#?}");
        assert!(rep.summary.named("laplace_trend").count() == 2);
        assert!(rep.summary.named("tilting").count() > 0);
        assert!(run_capacity_suite(&ExperimentConfig { m: 2, ..cfg }).is_err());
    }

    #[test]
    fn diff_formula_on_a_small_box() {
        let mut cfg = small(8, 1500);
        cfg.a_grid = vec![0.0, 0.4];
        cfg.r_k = 3;
        cfg.r0 = 2;
        let rep = run_diff_formula(&cfg).unwrap();
        let at0 = rep
            .summary
            .named("diff_cap")
            .find(|r| r.get("a") == Some(0.0))
            .unwrap();
        assert_eq!(at0.estimate, 0.0);
        let fails: Vec<_> = rep.summary.failures().collect();
        assert!(fails.is_empty(), "{fails:#?}");
    }

    #[test]
    fn com_inequality_holds() {
        let mut cfg = small(8, 1000);
        cfg.a_grid = vec![-0.2, 0.0];
        cfg.b_grid = vec![0.1, 0.3];
        cfg.r_k = 4;
        cfg.r0 = 2;
        let rep = run_com_inequality(&cfg).unwrap();
        assert_eq!(rep.summary.records.len(), 4);
        assert!(rep.passed());
        for r in &rep.summary.records {
            assert!(r.get("right").unwrap() <= r.get("p_a").unwrap());
        }
    }
}
