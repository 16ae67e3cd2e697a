//! Interlacement experiments: local uniqueness and the emptiness law.

use crate::graph::{ball, BoxLattice, Network};
use crate::interlacements::{loc_uniq, sample_soup};
use crate::potential::Domain;
use crate::rng::{combine, SampleKey};
use crate::stats::{fmt_f64, linear_fit, mean_stderr, proportion_stderr, wilson_interval};
use crate::Error;

use super::{
    sample_map, sorted_levels, with_domain, EstimateRecord, ExperimentConfig, Provenance, Report,
    Rig, Table,
};

/// Five test sets around the origin: a point, `B(0, 1)`, a segment of four
/// points, a 3 x 3 square and `B(0, 2)`.
pub fn emptiness_sets(lat: &BoxLattice) -> Vec<(&'static str, Vec<usize>)> {
    let at = |c: &[i64]| {
        let mut full = vec![0i64; lat.d];
        full[..c.len()].copy_from_slice(c);
        lat.vertex(&full).expect("inside the box")
    };
    let o = at(&[0]);
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    vec![
        ("point", vec![o]),
        ("ball1", ball(lat, o, 1).expect("interior origin")),
        ("segment", sorted((0..4).map(|k| at(&[k])).collect())),
        (
            "square",
            sorted(
                (-1..=1)
                    .flat_map(|i| (-1..=1).map(move |j| (i, j)))
                    .map(|(i, j)| at(&[i, j]))
                    .collect(),
            ),
        ),
        ("ball2", ball(lat, o, 2).expect("interior origin")),
    ]
}

/// Failure probability of local uniqueness over a `(u, R)` grid, from soups
/// coupled across `u` by superposition, and the emptiness law on five sets.
pub fn run_locuniq(cfg: &ExperimentConfig) -> Result<Report, Error> {
    cfg.validate()?;
    with_domain!(&Rig::new(&cfg.lattice)?, d => locuniq_on(d, cfg))
}

fn locuniq_on<N: Network>(domain: &Domain<N>, cfg: &ExperimentConfig) -> Result<Report, Error> {
    let us = sorted_levels(&cfg.u_grid);
    if us.is_empty() || us[0] <= 0.0 || cfg.r_grid.is_empty() {
        return Err(Error::Config(
            "locuniq needs positive u_grid and nonempty r_grid".into(),
        ));
    }
    let net = &domain.net;
    let o = net.origin();
    let l_obs = cfg.lattice.obs_radius;
    let lat = BoxLattice::from_spec(&cfg.lattice);
    let mut radii = cfg.r_grid.clone();
    radii.sort_unstable();
    radii.dedup();
    let outer = |r: usize| (cfg.lambda_factor * r as f64).floor() as usize;
    if let Some(&r) = radii.iter().find(|&&r| outer(r) > l_obs || r == 0) {
        return Err(Error::Config(format!(
            "window B(0, {}) for R = {r} does not fit the observation radius {l_obs}",
            outer(r)
        )));
    }
    let u_max = *us.last().unwrap();
    let nu = cfg.nu();
    let n = cfg.n_samples;
    let nn = n as u64;
    let sets = emptiness_sets(&lat);
    let set_caps: Vec<f64> = sets
        .iter()
        .map(|(_, s)| domain.equilibrium_measure(s).map(|p| p.cap))
        .collect::<Result<_, _>>()?;
    let mut records = Vec::new();
    let mut table = Table::new(&[
        "seed",
        "sample",
        "u",
        "R",
        "lambda_factor",
        "n_traj",
        "locuniq",
    ]);
    let last = *radii.last().unwrap();
    let mut fail_table: Vec<Vec<f64>> = Vec::new();
    for &r in &radii {
        let window = ball(net, o, outer(r))?;
        let eq = domain.equilibrium_measure(&window)?;
        let with_sets = r == last && outer(r) >= 2;
        let seed = combine(cfg.seed, r as u64);
        // Per sample: (trajectory count at each u, LocUniq at each u, set hits at each u).
        let rows = sample_map(
            n,
            cfg.workers,
            || vec![false; net.vertex_count()],
            |mark, i| {
                let soup = sample_soup(net, &eq, u_max, SampleKey::new(seed, i))?;
                let mut counts = Vec::with_capacity(us.len());
                let mut ok = Vec::with_capacity(us.len());
                let mut hits = Vec::new();
                for &u in &us {
                    let s = soup.at_level(u);
                    counts.push(s.count());
                    ok.push(loc_uniq(&s, net, o, r, cfg.lambda_factor)?);
                    if with_sets {
                        for (_, set) in &sets {
                            set.iter().for_each(|&x| mark[x] = true);
                            hits.push(s.hits(mark));
                            set.iter().for_each(|&x| mark[x] = false);
                        }
                    }
                }
                Ok((counts, ok, hits))
            },
        )?;
        let mut fails = Vec::new();
        for (k, &u) in us.iter().enumerate() {
            let f = rows.iter().filter(|row| !row.1[k]).count() as u64;
            let p = f as f64 / n as f64;
            let (lo, hi) = wilson_interval(f, nn, 1.96);
            let scale = u * (r as f64).powf(nu);
            let mut rec = EstimateRecord::new("locuniq_failure", p, proportion_stderr(f, nn), nn)
                .param("u", u)
                .param("R", r as f64)
                .param("lambda_factor", cfg.lambda_factor)
                .param("u_r_nu", scale)
                .param("wilson_lo", lo)
                .param("wilson_hi", hi);
            if f == 0 {
                rec = rec.flag("no failures observed; wilson_hi is a one-sided bound");
            }
            if scale >= cfg.locuniq_scale {
                rec = rec
                    .verdict(p < cfg.locuniq_threshold)
                    .param("threshold", cfg.locuniq_threshold);
            }
            records.push(rec);
            fails.push(p);
        }
        let strictly = fails
            .windows(2)
            .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
        let mut rec = EstimateRecord::new(
            "locuniq_monotone",
            fails.windows(2).filter(|w| w[1] >= w[0]).count() as f64,
            0.0,
            nn,
        )
        .param("R", r as f64)
        .verdict(strictly);
        for (u, p) in us.iter().zip(&fails) {
            rec = rec.param(&format!("p_u{}", fmt_f64(*u)), *p);
        }
        records.push(rec);
        fail_table.push(fails);
        // Trajectory counts at the top level are Poisson(u cap(window)).
        let counts: Vec<f64> = rows
            .iter()
            .map(|row| *row.0.last().unwrap() as f64)
            .collect();
        let (mean, _) = mean_stderr(&counts);
        let expected = u_max * eq.cap;
        let se = (expected / n as f64).sqrt();
        records.push(
            EstimateRecord::new("soup_count", mean, se, nn)
                .param("u", u_max)
                .param("R", r as f64)
                .param("cap_window", eq.cap)
                .against(
                    expected,
                    Provenance::ExactSolve,
                    cfg.k_sigma * se.max(1e-12),
                ),
        );
        if with_sets {
            for (k, &u) in us.iter().enumerate() {
                for (s, (_, set)) in sets.iter().enumerate() {
                    let hit = rows.iter().filter(|row| row.2[k * sets.len() + s]).count() as u64;
                    let p = 1.0 - hit as f64 / n as f64;
                    let reference = (-u * set_caps[s]).exp();
                    let se_ref = (reference * (1.0 - reference) / n as f64).sqrt();
                    records.push(
                        EstimateRecord::new("emptiness", p, proportion_stderr(hit, nn), nn)
                            .param("u", u)
                            .param("set", s as f64)
                            .param("set_size", set.len() as f64)
                            .param("cap", set_caps[s])
                            .against(
                                reference,
                                Provenance::ExactSolve,
                                cfg.emptiness_sigma * se_ref,
                            ),
                    );
                }
            }
        }
        for (i, row) in rows.iter().enumerate() {
            for (k, &u) in us.iter().enumerate() {
                table.push(vec![
                    cfg.seed.to_string(),
                    i.to_string(),
                    fmt_f64(u),
                    r.to_string(),
                    fmt_f64(cfg.lambda_factor),
                    row.0[k].to_string(),
                    (row.1[k] as u8).to_string(),
                ]);
            }
        }
    }
    // Monotonicity in R at fixed u, reported only.
    for (k, &u) in us.iter().enumerate() {
        let col: Vec<f64> = fail_table.iter().map(|f| f[k]).collect();
        let violations = col.windows(2).filter(|w| w[1] > w[0]).count();
        records.push(
            EstimateRecord::new("locuniq_r_monotone", violations as f64, 0.0, nn).param("u", u),
        );
    }
    // Decay shape: -log P against (u R^nu)^(1 / (2 nu + 1)).
    let mut pts = Vec::new();
    for (ri, &r) in radii.iter().enumerate() {
        for (k, &u) in us.iter().enumerate() {
            let p = fail_table[ri][k];
            let s = u * (r as f64).powf(nu);
            if p > 0.0 && s >= 1.0 {
                pts.push((s.powf(1.0 / (2.0 * nu + 1.0)), -p.ln()));
            }
        }
    }
    if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let f = linear_fit(&x, &y, None);
        records.push(
            EstimateRecord::new("locuniq_decay_slope", f.slope, f.slope_stderr, nn)
                .param("r2", f.r2),
        );
    }
    Ok(Report::new("locuniq", cfg, records, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeSpec;

    #[test]
    fn emptiness_sets_are_connected_and_distinct() {
        let lat = BoxLattice::new(3, 5);
        let sets = emptiness_sets(&lat);
        assert_eq!(sets.len(), 5);
        let sizes: Vec<usize> = sets.iter().map(|s| s.1.len()).collect();
        assert_eq!(sizes, vec![1, 7, 4, 9, 25]);
    }

    #[test]
    fn locuniq_on_a_small_box() {
        let mut cfg = ExperimentConfig::new(LatticeSpec::unit(3, 8, 7), 5);
        cfg.n_samples = 400;
        cfg.r_grid = vec![1];
        cfg.lambda_factor = 3.0;
        cfg.u_grid = vec![0.25, 1.0, 10.0];
        let rep = run_locuniq(&cfg).unwrap();
        assert_eq!(rep.summary.named("emptiness").count(), 15);
        let fails: Vec<_> = rep
            .summary
            .named("emptiness")
            .filter(|r| r.pass == Some(false))
            .collect();
        assert!(fails.is_empty(), "{fails:#?}");
        assert!(rep
            .summary
            .named("soup_count")
            .all(|r| r.pass == Some(true)));
        assert_eq!(rep.samples.rows.len(), 400 * 3);
        cfg.r_grid = vec![3];
        assert!(run_locuniq(&cfg).is_err());
    }
}
