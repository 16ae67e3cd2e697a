//! Deterministic checks of the potential theory and moment checks of the
//! field samplers.

use crate::gff::sample;
use crate::graph::{ball, build_lattice, refine, Network, WeightMode};
use crate::potential::Domain;
use crate::rng::{combine, SampleKey};
use crate::Error;

use super::{
    sample_map, with_domain, EstimateRecord, ExperimentConfig, Provenance, Report, Rig, Table,
    G_REF,
};

/// Tolerance of the sweeping and potential identities.
const IDENTITY_TOL: f64 = 1e-8;
/// Tolerance of `cap({0}) g(0, 0) = 1`.
const POINT_TOL: f64 = 1e-10;
/// Largest number of tracked vertices in the covariance check.
const COV_VERTICES: usize = 400;
/// Largest refined graph sampled by the refinement check.
const REFINED_LIMIT: usize = 200_000;
/// Samples accumulated per parallel task.
const CHUNK: usize = 256;

/// Sweeping identity, potential identity, point capacity and ball capacities.
pub fn run_potential_selftest(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => potential_on(d, cfg))
}

fn potential_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    let net = &domain.net;
    let o = net.origin();
    let l = cfg.lattice.half_side;
    let mut records = Vec::new();

    let outer = 3.min(l - 1);
    let inner = 1.min(outer);
    let dev = domain.sweeping_check(&ball(net, o, inner)?, &ball(net, o, outer)?)?;
    records.push(
        EstimateRecord::new("sweeping_deviation", dev, 0.0, 1)
            .param("inner", inner as f64)
            .param("outer", outer as f64)
            .within([0.0, IDENTITY_TOL]),
    );

    let r = 2.min(l - 1);
    let ps = domain.equilibrium_measure(&ball(net, o, r)?)?;
    let dev = domain.potential_identity_deviation(&ps);
    records.push(
        EstimateRecord::new("potential_identity_deviation", dev, 0.0, 1)
            .param("radius", r as f64)
            .param("cap", ps.cap)
            .within([0.0, IDENTITY_TOL]),
    );

    let g = domain.green(o, o);
    let cap = domain.equilibrium_measure(&[o])?.cap;
    records.push(
        EstimateRecord::new("point_capacity_deviation", (cap * g - 1.0).abs(), 0.0, 1)
            .param("cap", cap)
            .param("g_u", g)
            .within([0.0, POINT_TOL]),
    );

    let mut rec = EstimateRecord::new("green_origin", g, 0.0, 1).param("half_side", l as f64);
    if cfg.lattice.d == 3 && cfg.lattice.weight_mode == WeightMode::Unit {
        rec = rec.reference(G_REF, Provenance::ExactSolve);
    }
    records.push(rec);

    let profile = domain.ball_capacity_profile(&cfg.r_grid, cfg.lattice.obs_radius)?;
    for &(r, c) in &profile {
        records.push(EstimateRecord::new("ball_capacity", c, 0.0, 1).param("radius", r as f64));
    }
    let mut caps: Vec<(usize, f64)> = profile;
    caps.sort_by_key(|p| p.0);
    let violations = caps
        .windows(2)
        .filter(|w| w[1].0 > w[0].0 && w[1].1 <= w[0].1)
        .count();
    records.push(
        EstimateRecord::new("ball_capacity_monotone", violations as f64, 0.0, 1).within([0.0, 0.0]),
    );

    let table = Table::from_records(&records);
    Ok(Report::new("potential-selftest", cfg, records, table))
}

/// Empirical covariance of the sampler against the exact Green function, and
/// the marginal of the refined-graph field at the original vertices.
pub fn run_gff_selftest(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    let mut records = with_domain!(&Rig::new(&cfg.lattice)?, d => gff_on(d, cfg))?;

    let m = cfg.m.max(2);
    let base = build_lattice(&cfg.lattice)?;
    let refined_n = base.n() + (m - 1) * base.edge_count();
    if refined_n <= REFINED_LIMIT {
        let base_domain = Domain::direct(base.clone())?;
        let refined = Domain::direct(refine(&base, m)?.graph)?;
        let tracked = tracked_vertices(&base_domain)?;
        let green = green_matrix(&base_domain, &tracked);
        let acc = accumulate(&refined, &tracked, cfg, combine(cfg.seed, 0x2ef))?;
        records.extend(
            covariance_records("refined", &acc, &green, &tracked, cfg)
                .into_iter()
                .map(|r| r.param("m", m as f64)),
        );
    } else {
        records.push(
            EstimateRecord::new("refined_cov_max_z", f64::NAN, f64::NAN, 0)
                .param("m", m as f64)
                .flag("refined graph too large; check skipped"),
        );
    }

    let table = Table::from_records(&records);
    Ok(Report::new("gff-selftest", cfg, records, table))
}

fn gff_on<N: Network>(
    domain: &Domain<N>,
    cfg: &ExperimentConfig,
) -> Result<Vec<EstimateRecord>, Error> {
    let tracked = tracked_vertices(domain)?;
    let green = green_matrix(domain, &tracked);
    let acc = accumulate(domain, &tracked, cfg, cfg.seed)?;
    Ok(covariance_records("base", &acc, &green, &tracked, cfg))
}

/// Every interior vertex when there are at most [`COV_VERTICES`], otherwise
/// the ball of radius 3 around the origin.
fn tracked_vertices<N: Network>(domain: &Domain<N>) -> Result<Vec<usize>, Error> {
    let net = &domain.net;
    let interior: Vec<usize> = (0..net.vertex_count())
        .filter(|&x| !net.is_boundary(x))
        .collect();
    if interior.len() <= COV_VERTICES {
        return Ok(interior);
    }
    let o = net.origin();
    let mut r = 3;
    loop {
        let b = ball(net, o, r)?;
        if b.len() <= COV_VERTICES || r == 1 {
            return Ok(b);
        }
        r -= 1;
    }
}

/// Upper triangle of `g_U` restricted to `tracked`, row major.
fn green_matrix<N: Network>(domain: &Domain<N>, tracked: &[usize]) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = tracked
        .iter()
        .map(|&y| domain.green_column(y).values)
        .collect();
    let mut out = Vec::with_capacity(tracked.len() * (tracked.len() + 1) / 2);
    for i in 0..tracked.len() {
        for j in i..tracked.len() {
            out.push(cols[j][tracked[i]]);
        }
    }
    out
}

/// Sums of `phi_x phi_y` over the upper triangle and the sample count.
/// Chunks are summed in index order, so the result does not depend on the
/// number of workers.
fn accumulate<N: Network>(
    domain: &Domain<N>,
    tracked: &[usize],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<f64>, Error> {
    let k = tracked.len();
    let len = k * (k + 1) / 2;
    let n = cfg.n_samples;
    let chunks = n.div_ceil(CHUNK);
    let group = 4 * cfg.workers.max(1);
    let mut total = vec![0.0; len];
    let mut start = 0;
    while start < chunks {
        let count = group.min(chunks - start);
        let parts = sample_map(
            count,
            cfg.workers,
            || vec![0.0; k],
            |v, c| {
                let c = start + c as usize;
                let mut sums = vec![0.0; len];
                for i in (c * CHUNK) as u64..((c + 1) * CHUNK).min(n) as u64 {
                    let f = sample(domain, SampleKey::new(seed, i));
                    for (slot, &x) in v.iter_mut().zip(tracked) {
                        *slot = f.at(x);
                    }
                    let mut p = 0;
                    for a in 0..k {
                        let va = v[a];
                        for (s, &vb) in sums[p..p + k - a].iter_mut().zip(&v[a..]) {
                            *s += va * vb;
                        }
                        p += k - a;
                    }
                }
                Ok(sums)
            },
        )?;
        for part in parts {
            total.iter_mut().zip(&part).for_each(|(t, p)| *t += p);
        }
        start += count;
    }
    Ok(total)
}

/// Max and mean squared z-score of the empirical covariance. For a centered
/// Gaussian vector `Var(phi_x phi_y) = g(x, x) g(y, y) + g(x, y)^2`.
fn covariance_records(
    prefix: &str,
    sums: &[f64],
    green: &[f64],
    tracked: &[usize],
    cfg: &ExperimentConfig,
) -> Vec<EstimateRecord> {
    let k = tracked.len();
    let n = cfg.n_samples as f64;
    let diag: Vec<f64> = {
        let mut d = Vec::with_capacity(k);
        let mut p = 0;
        for a in 0..k {
            d.push(green[p]);
            p += k - a;
        }
        d
    };
    let mut max_z: f64 = 0.0;
    let mut sum_z2 = 0.0;
    let mut p = 0;
    for a in 0..k {
        for b in a..k {
            let g = green[p];
            let se = ((diag[a] * diag[b] + g * g) / n).sqrt();
            let z = (sums[p] / n - g) / se;
            max_z = max_z.max(z.abs());
            sum_z2 += z * z;
            p += 1;
        }
    }
    let entries = sums.len() as f64;
    let nn = cfg.n_samples as u64;
    vec![
        EstimateRecord::new(&format!("{prefix}_cov_max_z"), max_z, 0.0, nn)
            .param("entries", entries)
            .param("vertices", k as f64)
            .within([0.0, cfg.cov_sigma]),
        EstimateRecord::new(&format!("{prefix}_cov_mean_z2"), sum_z2 / entries, 0.0, nn)
            .param("entries", entries)
            .reference(1.0, Provenance::ExactFormula),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeSpec;

    #[test]
    fn potential_selftest_passes() {
        let cfg = ExperimentConfig::new(LatticeSpec::unit(3, 6, 5), 1);
        let rep = run_potential_selftest(&cfg).unwrap();
        assert!(
            rep.passed(),
            "{:#?}",
            rep.summary.failures().collect::<Vec<_>>()
        );
        assert!(rep.summary.named("green_origin").next().unwrap().estimate < G_REF);
    }

    #[test]
    fn potential_selftest_on_random_weights() {
        let mut spec = LatticeSpec::unit(3, 5, 4);
        spec.weight_mode = WeightMode::UniformlyEllipticRandom {
            c_lo: 0.5,
            c_hi: 2.0,
            seed: 3,
        };
        let rep = run_potential_selftest(&ExperimentConfig::new(spec, 1)).unwrap();
        assert!(rep.passed());
        assert!(rep
            .summary
            .named("green_origin")
            .next()
            .unwrap()
            .reference
            .is_none());
    }

    #[test]
    fn gff_selftest_on_a_small_box() {
        let mut cfg = ExperimentConfig::new(LatticeSpec::unit(3, 3, 2), 4);
        cfg.n_samples = 3000;
        let rep = run_gff_selftest(&cfg).unwrap();
        assert!(rep.passed(), "{:#?}", rep.summary.records);
        let z2 = rep
            .summary
            .named("base_cov_mean_z2")
            .next()
            .unwrap()
            .estimate;
        assert!(z2 > 0.5 && z2 < 2.0, "{z2}");
        assert_eq!(rep.summary.named("refined_cov_max_z").count(), 1);
        cfg.workers = 3;
        assert_eq!(
            run_gff_selftest(&cfg).unwrap().summary.records,
            rep.summary.records
        );
    }
}
