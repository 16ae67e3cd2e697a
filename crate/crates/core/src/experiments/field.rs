//! Experiments on the cluster of the origin: `theta_0`, the one-arm and
//! two-point functions and cluster volumes.

use crate::gff;
use crate::graph::{ball, BoxLattice, Network};
use crate::percolation::{cluster_of_origin, open_edges, Explorer, Geometry};
use crate::potential::Domain;
use crate::rng::SampleKey;
use crate::stats::{
    fit_through_origin, fmt_f64, linear_fit, normal_cdf, proportion_stderr, ratio_batch_means,
    wilson_interval,
};
use crate::Error;

use super::{
    log_grid, sample_map, theta0_reference, with_domain, xi, EstimateRecord, ExperimentConfig,
    Provenance, Report, Rig, Table, G_REF,
};

/// Outcome of the origin cluster at one level.
#[derive(Clone, Copy, Debug)]
struct Level {
    bounded: bool,
    volume: usize,
    radius: Option<usize>,
}

/// Explores the origin cluster at every level of `levels` for sample `i`.
fn scan_levels<N: Network>(
    domain: &Domain<N>,
    geom: &Geometry,
    cfg: &ExperimentConfig,
    levels: &[f64],
    explorer: &mut Explorer,
    i: u64,
) -> (f64, Vec<Level>) {
    let key = SampleKey::new(cfg.seed, i);
    let field = gff::sample(domain, key);
    let out = levels
        .iter()
        .map(|&a| {
            let edges = open_edges(&domain.net, &field.values, a, key);
            let c = cluster_of_origin(&edges, geom, cfg.censoring, explorer);
            Level {
                bounded: c.is_bounded(),
                volume: c.volume,
                radius: c.radius,
            }
        })
        .collect();
    (field.values[domain.net.origin()], out)
}

fn proportion(name: &str, k: u64, n: u64) -> EstimateRecord {
    let (lo, hi) = wilson_interval(k, n, 1.96);
    EstimateRecord::new(name, k as f64 / n as f64, proportion_stderr(k, n), n)
        .param("wilson_lo", lo)
        .param("wilson_hi", hi)
}

fn opt(x: Option<usize>) -> String {
    x.map(|r| r.to_string()).unwrap_or_default()
}

/// `theta_0(a) = P(cluster of the origin at level a is bounded)` against
/// `2 Phi(a ^ 0)`, and the secant slope at the negative level closest to zero.
pub fn run_theta0(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => theta0_on(d, cfg))
}

fn theta0_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() {
        return Err(Error::Config("theta0 needs a nonempty a_grid".into()));
    }
    let geom = Geometry::new(&domain.net, cfg.lattice.obs_radius);
    let n = cfg.n_samples;
    let rows = sample_map(
        n,
        cfg.workers,
        || Explorer::new(domain.net.vertex_count()),
        |ex, i| Ok(scan_levels(domain, &geom, cfg, &cfg.a_grid, ex, i)),
    )?;
    let g_u = domain.green(domain.net.origin(), domain.net.origin());
    let mut records = Vec::new();
    let mut theta = Vec::new();
    for (j, &a) in cfg.a_grid.iter().enumerate() {
        let k = rows.iter().filter(|r| r.1[j].bounded).count() as u64;
        let rec = proportion("theta0", k, n as u64).param("a", a);
        let reference = theta0_reference(a, G_REF);
        let tol = cfg.k_sigma * rec.stderr + cfg.truncation_margin;
        let rec = rec
            .param("reference_g_u", theta0_reference(a, g_u))
            .param("g_u", g_u)
            .against(reference, Provenance::ExactFormula, tol);
        theta.push((a, rec.estimate, rec.stderr));
        records.push(rec);
    }
    if let Some(&(a, t, se)) = theta
        .iter()
        .filter(|t| t.0 < 0.0)
        .max_by(|x, y| x.0.total_cmp(&y.0))
    {
        let slope = (1.0 - t) / a.abs();
        let reference = (2.0 / (std::f64::consts::PI * G_REF)).sqrt();
        records.push(
            EstimateRecord::new("theta0_slope", slope, se / a.abs(), n as u64)
                .param("a", a)
                .param(
                    "secant_reference",
                    (1.0 - theta0_reference(a, G_REF)) / a.abs(),
                )
                .against(
                    reference,
                    Provenance::ExactFormula,
                    cfg.slope_rel_tol * reference,
                ),
        );
    }
    let mut table = Table::new(&["seed", "sample", "a", "phi0", "bounded", "volume", "radius"]);
    for (i, (phi0, levels)) in rows.iter().enumerate() {
        for (&a, l) in cfg.a_grid.iter().zip(levels) {
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(a),
                fmt_f64(*phi0),
                (l.bounded as u8).to_string(),
                l.volume.to_string(),
                opt(l.radius),
            ]);
        }
    }
    Ok(Report::new("theta0", cfg, records, table))
}

/// One-arm functions `psi(a, r) = P(r <= rad(K^a) < infinity)` and
/// `psi~(a, r) = P(B_xi(a) <-> inner boundary of B_r, not <-> infinity)`,
/// with the collapse data `psi(a, r) / psi(0, r)`.
pub fn run_onearm(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => onearm_on(d, cfg))
}

struct OneArmRow {
    phi0: f64,
    levels: Vec<Level>,
    /// `(max distance, censored)` of the exploration from `B_xi(a)`.
    tilde: Vec<Option<(usize, bool)>>,
}

fn onearm_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() || cfg.r_grid.is_empty() {
        return Err(Error::Config(
            "onearm needs nonempty a_grid and r_grid".into(),
        ));
    }
    let net = &domain.net;
    let o = net.origin();
    let l_obs = cfg.lattice.obs_radius;
    let nu = cfg.nu();
    let geom = Geometry::new(net, l_obs);
    // Source balls B_xi(a) for the levels where xi(a) fits the window.
    let sources: Vec<Option<Vec<usize>>> = cfg
        .a_grid
        .iter()
        .map(|&a| {
            let x = xi(a, nu);
            (x.is_finite() && x.round() <= l_obs as f64)
                .then(|| ball(net, o, x.round() as usize))
                .transpose()
        })
        .collect::<Result<_, _>>()?;
    let n = cfg.n_samples;
    let rows = sample_map(
        n,
        cfg.workers,
        || Explorer::new(net.vertex_count()),
        |ex, i| {
            let key = SampleKey::new(cfg.seed, i);
            let field = gff::sample(domain, key);
            let mut levels = Vec::new();
            let mut tilde = Vec::new();
            for (&a, src) in cfg.a_grid.iter().zip(&sources) {
                let edges = open_edges(net, &field.values, a, key);
                let c = cluster_of_origin(&edges, &geom, cfg.censoring, ex);
                levels.push(Level {
                    bounded: c.is_bounded(),
                    volume: c.volume,
                    radius: c.radius,
                });
                tilde.push(src.as_ref().map(|s| {
                    let e = ex.explore(&edges, &geom, s, cfg.censoring, true);
                    let censored = match cfg.censoring {
                        crate::percolation::Censoring::Boundary => e.reaches_boundary,
                        crate::percolation::Censoring::Window => e.touches_window,
                    };
                    (
                        if e.vertices.is_empty() { 0 } else { e.max_dist },
                        censored || e.vertices.is_empty(),
                    )
                }));
            }
            Ok(OneArmRow {
                phi0: field.values[o],
                levels,
                tilde,
            })
        },
    )?;
    let nn = n as u64;
    let mut records = Vec::new();
    let g_u = domain.green(o, o);
    let zero = cfg.a_grid.iter().position(|&a| a == 0.0);
    for (j, &a) in cfg.a_grid.iter().enumerate() {
        let x = xi(a, nu);
        // psi(a, 0) = P(phi_0 >= a, bounded) = 1 - Phi(|a|).
        let k0 = rows
            .iter()
            .filter(|r| r.levels[j].bounded && r.levels[j].radius.is_some())
            .count() as u64;
        let rec = proportion("psi_r0", k0, nn).param("a", a);
        let tol = cfg.k_sigma * rec.stderr + cfg.truncation_margin;
        records.push(rec.param("g_u", g_u).against(
            1.0 - normal_cdf(a.abs(), g_u),
            Provenance::ExactFormula,
            tol,
        ));
        for &r in &cfg.r_grid {
            let hit = |row: &OneArmRow| {
                row.levels[j].bounded && row.levels[j].radius.is_some_and(|rad| rad >= r)
            };
            let k = rows.iter().filter(|row| hit(row)).count() as u64;
            records.push(
                proportion("psi", k, nn)
                    .param("a", a)
                    .param("r", r as f64)
                    .param("xi", x),
            );
            if let Some(t) = sources[j]
                .as_ref()
                .map(|_| x.round() as usize)
                .filter(|&t| t <= r)
            {
                let kt = rows
                    .iter()
                    .filter(|row| row.tilde[j].is_some_and(|(m, censored)| !censored && m >= r))
                    .count() as u64;
                records.push(
                    proportion("psi_tilde", kt, nn)
                        .param("a", a)
                        .param("r", r as f64)
                        .param("inner", t as f64),
                );
            }
            if let Some(z) = zero.filter(|&z| z != j) {
                let num: Vec<f64> = rows.iter().map(|row| hit(row) as u8 as f64).collect();
                let den: Vec<f64> = rows
                    .iter()
                    .map(|row| {
                        (row.levels[z].bounded && row.levels[z].radius.is_some_and(|rad| rad >= r))
                            as u8 as f64
                    })
                    .collect();
                let (ratio, se) = ratio_batch_means(&num, &den, cfg.batches);
                let s = r as f64 / x;
                records.push(
                    EstimateRecord::new("psi_ratio", ratio, se, nn)
                        .param("a", a)
                        .param("r", r as f64)
                        .param("xi", x)
                        .param("r_over_xi", s)
                        .param("r_over_xi_pow_nu", s.powf(nu))
                        .param(
                            "r_over_xi_over_log",
                            if s > 1.0 { s / s.ln() } else { f64::NAN },
                        ),
                );
            }
        }
    }
    if let Some(z) = zero {
        let pts: Vec<(f64, f64)> = records
            .iter()
            .filter(|r| {
                r.name == "psi"
                    && r.get("a") == Some(0.0)
                    && r.estimate > 0.0
                    && r.get("r").unwrap() > 0.0
            })
            .map(|r| (r.get("r").unwrap().ln(), r.estimate.ln()))
            .collect();
        if pts.len() >= 2 {
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let fit = linear_fit(&lx, &ly, None);
            records.push(
                EstimateRecord::new("onearm_slope", fit.slope, fit.slope_stderr, nn)
                    .param("a", cfg.a_grid[z])
                    .param("r2", fit.r2)
                    .reference(-nu / 2.0, Provenance::ExactFormula)
                    .within(cfg.onearm_window),
            );
        }
    }
    let mut table = Table::new(&[
        "seed",
        "sample",
        "a",
        "phi0",
        "bounded",
        "radius",
        "tilde_max_dist",
        "tilde_censored",
    ]);
    for (i, row) in rows.iter().enumerate() {
        for (j, &a) in cfg.a_grid.iter().enumerate() {
            let l = row.levels[j];
            let (tm, tc) = row.tilde[j].map_or((String::new(), String::new()), |(m, c)| {
                (m.to_string(), (c as u8).to_string())
            });
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(a),
                fmt_f64(row.phi0),
                (l.bounded as u8).to_string(),
                opt(l.radius),
                tm,
                tc,
            ]);
        }
    }
    Ok(Report::new("onearm", cfg, records, table))
}

/// Two-point targets: points on the first axis and on the two diagonals.
fn twopoint_targets(lat: &BoxLattice, d_max: usize) -> Vec<(usize, usize, [i64; 3])> {
    let mut out = Vec::new();
    let mut push = |c: [i64; 3]| {
        let dist = c.iter().map(|v| v.unsigned_abs() as usize).sum::<usize>();
        if dist >= 1 && dist <= d_max {
            let mut full = vec![0i64; lat.d];
            full[..3.min(lat.d)].copy_from_slice(&c[..3.min(lat.d)]);
            if let Some(x) = lat.vertex(&full) {
                out.push((x, dist, c));
            }
        }
    };
    for k in 1..=d_max as i64 {
        push([k, 0, 0]);
        push([k, k, 0]);
        push([k, k, k]);
    }
    out.sort_by_key(|t| (t.1, t.0));
    out.dedup_by_key(|t| t.0);
    out
}

/// Truncated two-point function `tau_a(0, x) = P(x in K^a, K^a bounded)`.
pub fn run_twopoint(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => twopoint_on(d, cfg))
}

fn twopoint_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() {
        return Err(Error::Config("twopoint needs a nonempty a_grid".into()));
    }
    let net = &domain.net;
    let o = net.origin();
    let d_max = if cfg.twopoint_max == 0 {
        cfg.lattice.obs_radius / 2
    } else {
        cfg.twopoint_max
    };
    let lat = BoxLattice::from_spec(&cfg.lattice);
    let targets = twopoint_targets(&lat, d_max);
    if targets.is_empty() {
        return Err(Error::Config(
            "no two-point targets within L_obs / 2".into(),
        ));
    }
    let geom = Geometry::new(net, cfg.lattice.obs_radius);
    let mut levels = cfg.a_grid.clone();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let n = cfg.n_samples;
    // Per level: (bounded, volume, connection to each target). Connections
    // are pointwise monotone under the coupling; the truncated indicator is not.
    let rows = sample_map(
        n,
        cfg.workers,
        || Explorer::new(net.vertex_count()),
        |ex, i| {
            let key = SampleKey::new(cfg.seed, i);
            let field = gff::sample(domain, key);
            let mut out = Vec::with_capacity(levels.len());
            for &a in &levels {
                let edges = open_edges(net, &field.values, a, key);
                let c = cluster_of_origin(&edges, &geom, cfg.censoring, ex);
                let mut v = c.vertices.clone();
                v.sort_unstable();
                let hits: Vec<bool> = targets
                    .iter()
                    .map(|t| v.binary_search(&t.0).is_ok())
                    .collect();
                out.push((c.is_bounded(), c.volume, hits));
            }
            Ok(out)
        },
    )?;
    let g00 = domain.green(o, o);
    let col = domain.green_column(o).values;
    let rho: Vec<f64> = targets
        .iter()
        .map(|t| col[t.0] / (g00 * domain.green(t.0, t.0)).sqrt())
        .collect();
    let nn = n as u64;
    let mut records = Vec::new();
    let mut violations = 0u64;
    for row in &rows {
        // A censored exploration stops early, so only complete lower-level
        // clusters are compared.
        for w in row.windows(2).filter(|w| w[0].0) {
            violations += w[0]
                .2
                .iter()
                .zip(&w[1].2)
                .filter(|(lo, hi)| !**lo && **hi)
                .count() as u64;
        }
    }
    for (j, &a) in levels.iter().enumerate() {
        for (t, target) in targets.iter().enumerate() {
            let k = rows.iter().filter(|r| r[j].0 && r[j].2[t]).count() as u64;
            let c = target.2;
            records.push(
                proportion("tau", k, nn)
                    .param("a", a)
                    .param("d", target.1 as f64)
                    .param("x1", c[0] as f64)
                    .param("x2", c[1] as f64)
                    .param("x3", c[2] as f64)
                    .param("rho", rho[t]),
            );
        }
    }
    records.push(
        EstimateRecord::new("connection_monotone_violations", violations as f64, 0.0, nn).against(
            0.0,
            Provenance::ExactFormula,
            0.0,
        ),
    );
    if levels.contains(&0.0) {
        let taus: Vec<EstimateRecord> = records
            .iter()
            .filter(|r| r.name == "tau" && r.get("a") == Some(0.0))
            .cloned()
            .collect();
        let x: Vec<f64> = taus.iter().map(|r| r.get("rho").unwrap().asin()).collect();
        let y: Vec<f64> = taus.iter().map(|r| r.estimate).collect();
        let (c, r2) = fit_through_origin(&x, &y);
        let two_over_pi = 2.0 / std::f64::consts::PI;
        let mut fit = EstimateRecord::new("twopoint_constant", c, f64::NAN, nn)
            .param("r2", r2)
            .param("one_sided_constant", 1.0 / std::f64::consts::PI)
            .reference(two_over_pi, Provenance::ExactFormula);
        if (c - two_over_pi).abs() > 0.1 * two_over_pi {
            fit = fit.flag("fitted constant differs from 2/pi by more than 10%");
        }
        records.push(fit);
        records.push(EstimateRecord::new("twopoint_r2", r2, 0.0, nn).within([cfg.min_r2, 1.0]));
        let [lo, hi] = cfg.twopoint_fit_range;
        let axis: Vec<(f64, f64)> = taus
            .iter()
            .filter(|r| {
                let d = r.get("d").unwrap() as usize;
                r.get("x2") == Some(0.0) && d >= lo && d <= hi && r.estimate > 0.0
            })
            .map(|r| (r.get("d").unwrap().ln(), r.estimate.ln()))
            .collect();
        if axis.len() >= 2 {
            let (lx, ly): (Vec<f64>, Vec<f64>) = axis.into_iter().unzip();
            let f = linear_fit(&lx, &ly, None);
            records.push(
                EstimateRecord::new("twopoint_decay", f.slope, f.slope_stderr, nn)
                    .param("d_lo", lo as f64)
                    .param("d_hi", hi.min(d_max) as f64)
                    .param("r2", f.r2)
                    .reference(-cfg.nu(), Provenance::ExactFormula)
                    .within(cfg.twopoint_window),
            );
        }
    }
    let mut table = Table::new(&["seed", "sample", "a", "bounded", "volume", "connected"]);
    for (i, row) in rows.iter().enumerate() {
        for (&a, (bounded, volume, hits)) in levels.iter().zip(row) {
            let bits: String = hits.iter().map(|&h| if h { '1' } else { '0' }).collect();
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(a),
                (*bounded as u8).to_string(),
                volume.to_string(),
                bits,
            ]);
        }
    }
    Ok(Report::new("twopoint", cfg, records, table))
}

/// Volume moments `E[|K^a| 1{bounded}]` and the tail of `|K^0|`.
pub fn run_volume(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => volume_on(d, cfg))
}

fn volume_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    if cfg.a_grid.is_empty() {
        return Err(Error::Config("volume needs a nonempty a_grid".into()));
    }
    let geom = Geometry::new(&domain.net, cfg.lattice.obs_radius);
    let n = cfg.n_samples;
    let nn = n as u64;
    let rows = sample_map(
        n,
        cfg.workers,
        || Explorer::new(domain.net.vertex_count()),
        |ex, i| Ok(scan_levels(domain, &geom, cfg, &cfg.a_grid, ex, i).1),
    )?;
    let mut records = Vec::new();
    let mut moments = Vec::new();
    for (j, &a) in cfg.a_grid.iter().enumerate() {
        let v: Vec<f64> = rows
            .iter()
            .map(|r| {
                if r[j].bounded {
                    r[j].volume as f64
                } else {
                    0.0
                }
            })
            .collect();
        let (mean, se) = crate::stats::mean_stderr(&v);
        let censored = rows.iter().filter(|r| !r[j].bounded).count() as f64 / n as f64;
        let mut rec = EstimateRecord::new("volume_mean", mean, se, nn)
            .param("a", a)
            .param("censored_fraction", censored);
        if censored > 0.1 {
            rec = rec.flag("heavy censoring");
        }
        if (0.1..=0.5).contains(&a) && mean > 0.0 {
            moments.push((a.ln(), mean.ln()));
        }
        records.push(rec);
    }
    if moments.len() >= 2 {
        let (lx, ly): (Vec<f64>, Vec<f64>) = moments.into_iter().unzip();
        let f = linear_fit(&lx, &ly, None);
        let (nu, alpha) = cfg.lattice.exponents();
        records.push(
            EstimateRecord::new("volume_exponent", f.slope, f.slope_stderr, nn)
                .param("r2", f.r2)
                .reference(-(2.0 * alpha / nu - 2.0), Provenance::ExactFormula)
                .flag("finite-size estimate, reported only"),
        );
    }
    if let Some(z) = cfg.a_grid.iter().position(|&a| a == 0.0) {
        let grid = log_grid(cfg.volume_range[0], cfg.volume_range[1], 7);
        let mut pts = Vec::new();
        for &t in &grid {
            let k = rows
                .iter()
                .filter(|r| r[z].bounded && r[z].volume as f64 >= t)
                .count() as u64;
            let rec = proportion("volume_tail", k, nn).param("n_min", t);
            if k > 0 {
                pts.push((t.ln(), rec.estimate.ln()));
            }
            records.push(rec);
        }
        if pts.len() >= 2 {
            let (lx, ly): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let f = linear_fit(&lx, &ly, None);
            let (nu, alpha) = cfg.lattice.exponents();
            records.push(
                EstimateRecord::new("volume_tail_slope", f.slope, f.slope_stderr, nn)
                    .param("r2", f.r2)
                    .reference(-nu / (2.0 * alpha - nu), Provenance::ExactFormula)
                    .within(cfg.volume_tail_window),
            );
        }
    }
    let mut table = Table::new(&["seed", "sample", "a", "bounded", "volume"]);
    for (i, row) in rows.iter().enumerate() {
        for (&a, l) in cfg.a_grid.iter().zip(row) {
            table.push(vec![
                cfg.seed.to_string(),
                i.to_string(),
                fmt_f64(a),
                (l.bounded as u8).to_string(),
                l.volume.to_string(),
            ]);
        }
    }
    Ok(Report::new("volume", cfg, records, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeSpec;

    fn small(l: usize, n: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(LatticeSpec::unit(3, l, (2 * l) / 3), 7);
        cfg.n_samples = n;
        cfg
    }

    #[test]
    fn theta0_matches_exact_law_on_a_small_box() {
        let cfg = small(6, 3000);
        let rep = run_theta0(&cfg).unwrap();
        for r in rep.summary.named("theta0") {
            let exact = r.get("reference_g_u").unwrap();
            assert!(
                (r.estimate - exact).abs() < 4.0 * r.stderr.max(1e-3),
                "{r:?}"
            );
        }
        let at = |a: f64| {
            rep.summary
                .named("theta0")
                .find(|r| r.get("a") == Some(a))
                .unwrap()
                .estimate
        };
        assert_eq!(at(0.5), 1.0);
        assert_eq!(at(0.0), 1.0);
        assert_eq!(rep.samples.rows.len(), 3000 * cfg.a_grid.len());
    }

    #[test]
    fn workers_do_not_change_output() {
        let mut cfg = small(6, 200);
        let a = run_onearm(&cfg).unwrap();
        cfg.workers = 3;
        let b = run_onearm(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a.summary.records).unwrap(),
            serde_json::to_string(&b.summary.records).unwrap()
        );
        assert_eq!(a.samples.to_csv(), b.samples.to_csv());
    }

    #[test]
    fn onearm_radius_zero_and_monotone_in_r() {
        let mut cfg = small(8, 2000);
        cfg.a_grid = vec![0.0, 0.3];
        cfg.r_grid = vec![1, 2, 3, 4];
        let rep = run_onearm(&cfg).unwrap();
        assert!(rep.summary.named("psi_r0").all(|r| r.pass == Some(true)));
        for a in [0.0, 0.3] {
            let v: Vec<f64> = rep
                .summary
                .named("psi")
                .filter(|r| r.get("a") == Some(a))
                .map(|r| r.estimate)
                .collect();
            assert!(v.windows(2).all(|w| w[0] >= w[1]), "{v:?}");
        }
        assert!(rep.summary.named("psi_ratio").all(|r| r.estimate <= 1.0));
        assert_eq!(rep.summary.named("onearm_slope").count(), 1);
    }

    #[test]
    fn twopoint_is_monotone_in_level() {
        let mut cfg = small(8, 500);
        cfg.a_grid = vec![-0.2, 0.0, 0.3];
        let rep = run_twopoint(&cfg).unwrap();
        let v = rep
            .summary
            .named("connection_monotone_violations")
            .next()
            .unwrap();
        assert_eq!(v.estimate, 0.0);
        assert!(rep.summary.named("twopoint_constant").count() == 1);
        let lat = BoxLattice::new(3, 8);
        let t = twopoint_targets(&lat, 3);
        assert_eq!(
            t.iter().map(|t| t.1).collect::<Vec<_>>(),
            vec![1, 2, 2, 3, 3]
        );
    }

    #[test]
    fn volume_is_decreasing_in_level() {
        let mut cfg = small(6, 500);
        cfg.a_grid = vec![0.0, 0.2, 0.5, 2.0];
        cfg.volume_range = [2.0, 50.0];
        let rep = run_volume(&cfg).unwrap();
        let v: Vec<f64> = rep
            .summary
            .named("volume_mean")
            .map(|r| r.estimate)
            .collect();
        assert!(v.windows(2).all(|w| w[0] >= w[1]), "{v:?}");
        assert!(v[3] < 0.1);
    }
}
