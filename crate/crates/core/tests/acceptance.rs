//! Acceptance criteria 1-15, one line per criterion.
//!
//! The default rigs are sized for a single core; `ACCEPTANCE_SCALE=full` runs
//! the larger rigs. Tolerances are pinned here rather than taken from config
//! defaults. The process exits nonzero when any criterion fails, except
//! criterion 9, which needs radii far beyond any box that fits in memory and
//! is expected to print FAIL.

use std::time::Instant;

use cablegff::experiments::{self, Report, G_REF};
use cablegff::{EstimateRecord, ExperimentConfig, LatticeSpec};

const EXPECTED_FAIL: &[usize] = &[9];

#[derive(Clone, Copy, PartialEq)]
enum Scale {
    Quick,
    Full,
}

struct Outcome {
    id: usize,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

/// Config with the tolerances of the acceptance criteria.
fn rig(half_side: usize, obs_radius: usize, n: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(LatticeSpec::unit(3, half_side, obs_radius), seed);
    cfg.n_samples = n;
    cfg.workers = workers();
    cfg.k_sigma = 3.0;
    cfg.truncation_margin = 0.02;
    cfg.slope_rel_tol = 0.15;
    cfg.prefactor_rel_tol = 0.25;
    cfg.cov_sigma = 5.0;
    cfg.emptiness_sigma = 4.0;
    cfg.onearm_window = [-0.65, -0.35];
    cfg.twopoint_window = [-1.35, -0.7];
    cfg.kappa_window = [0.4, 0.6];
    cfg.min_r2 = 0.98;
    cfg.locuniq_threshold = 0.05;
    cfg.locuniq_scale = 20.0;
    cfg.h = 0.05;
    cfg
}

fn run(name: &str, cfg: &ExperimentConfig) -> Report {
    experiments::run(name, cfg).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// All records called `name` (optionally filtered) passed, and there is at least one.
fn all_pass<'a>(recs: impl Iterator<Item = &'a EstimateRecord>) -> (bool, usize, usize) {
    let mut total = 0;
    let mut failed = 0;
    for r in recs {
        if r.pass.is_some() {
            total += 1;
            failed += (r.pass == Some(false)) as usize;
        }
    }
    (total > 0 && failed == 0, total, failed)
}

fn fmt(x: f64) -> String {
    format!("{x:.4}")
}

fn c1(scale: Scale) -> Outcome {
    let l = if scale == Scale::Full { 48 } else { 16 };
    let cfg = rig(l, 2 * l / 3, 1, 1);
    let t = Instant::now();
    let rep = run("potential-selftest", &cfg);
    let secs = t.elapsed().as_secs_f64();
    let get = |n: &str| rep.summary.named(n).next().unwrap().estimate;
    let pass = rep.passed() && secs < 30.0;
    Outcome {
        id: 1,
        title: "potential self-test",
        pass,
        detail: format!(
            "L={l}: sweeping {:.1e} (< 1e-8), |G e - h| {:.1e} (< 1e-8), |cap g - 1| {:.1e} (< 1e-10), {secs:.1}s (< 30s)",
            get("sweeping_deviation"),
            get("potential_identity_deviation"),
            get("point_capacity_deviation")
        ),
    }
}

fn c2(scale: Scale) -> Outcome {
    let n = if scale == Scale::Full {
        200_000
    } else {
        50_000
    };
    let mut cfg = rig(4, 3, n, 2);
    cfg.m = 2;
    let t = Instant::now();
    let rep = run("gff-selftest", &cfg);
    let secs = t.elapsed().as_secs_f64();
    let rec = |n: &str| rep.summary.named(n).next().unwrap().clone();
    let (base, refined) = (rec("base_cov_max_z"), rec("refined_cov_max_z"));
    Outcome {
        id: 2,
        title: "GFF sampler covariance",
        pass: base.pass == Some(true) && refined.pass == Some(true) && secs < 300.0,
        detail: format!(
            "L=4, n={n}, {} entries: max z base {} refined(m=2) {} (<= 5), {secs:.0}s",
            base.get("entries").unwrap(),
            fmt(base.estimate),
            fmt(refined.estimate)
        ),
    }
}

fn c3_c4(scale: Scale) -> (Outcome, Outcome) {
    let l = if scale == Scale::Full { 48 } else { 16 };
    let mut cfg = rig(l, 2 * l / 3, 50_000, 3);
    cfg.a_grid = vec![-1.0, -0.5, -0.2, -0.1, 0.0, 0.2, 0.5];
    let rep = run("theta0", &cfg);
    let (ok, total, failed) = all_pass(rep.summary.named("theta0"));
    let worst = rep
        .summary
        .named("theta0")
        .map(|r| {
            (r.estimate - r.reference.unwrap()).abs()
                / (r.accept.unwrap()[1] - r.reference.unwrap())
        })
        .fold(0.0, f64::max);
    let slope = rep.summary.named("theta0_slope").next().unwrap();
    (
        Outcome {
            id: 3,
            title: "theta0 law",
            pass: ok && total == 7,
            detail: format!(
                "L={l}, n=50000: {}/{total} levels within 3 se + 0.02 of 2 Phi(a ^ 0) with g = {G_REF:.6}; worst |dev|/tol {}",
                total - failed,
                fmt(worst)
            ),
        },
        Outcome {
            id: 4,
            title: "slope at criticality",
            pass: slope.pass == Some(true),
            detail: format!(
                "secant {} vs sqrt(2/(pi g)) = {} (rel. tol 0.15)",
                fmt(slope.estimate),
                fmt(slope.reference.unwrap())
            ),
        },
    )
}

fn c5_c6_c7(scale: Scale) -> (Outcome, Outcome, Outcome) {
    let n = if scale == Scale::Full {
        100_000
    } else {
        20_000
    };
    let mut cfg = rig(8, 7, n, 5);
    cfg.m = 8;
    cfg.patch_radius = 5;
    cfg.a_grid = vec![0.0, 0.3, 0.4];
    cfg.u_grid = vec![0.2, 0.5, 1.0];
    cfg.tail_range = [20.0, 200.0];
    cfg.tail_min_count = 100;
    let rep = run("capacity", &cfg);
    let s = &rep.summary;
    let lap = |r: &&EstimateRecord| r.get("a").is_some_and(|a| a == 0.0 || a == 0.3);
    let (ok_l, tot_l, _) = all_pass(s.named("laplace").filter(lap));
    let (ok_t, tot_t, _) = all_pass(s.named("laplace_trend").filter(lap));
    let kappa = s.named("capacity_kappa").next().unwrap();
    let pref = s.named("capacity_prefactor").next();
    let tilt = |r: &&EstimateRecord| r.get("a") == Some(0.4);
    let (ok_7, tot_7, fail_7) = all_pass(s.named("tilting").filter(tilt));
    let pref_ok = pref.is_some_and(|p| p.pass == Some(true));
    let span_ok = kappa
        .get("n_hi")
        .zip(kappa.get("n_lo"))
        .is_some_and(|(h, l)| h / l >= 10.0 - 1e-9);
    (
        Outcome {
            id: 5,
            title: "capacity Laplace transform",
            pass: ok_l && ok_t && tot_l == 12 && tot_t == 6,
            detail: format!("L=8, n={n}: {tot_l} comparisons at m=8 and cable, {tot_t} m-trends over m in {{1,2,4,8}}"),
        },
        Outcome {
            id: 6,
            title: "capacity tail",
            pass: kappa.pass == Some(true) && pref_ok && span_ok,
            detail: format!(
                "kappa {} over N in [{}, {}] (window [0.4, 0.6]); sqrt(N) P {} vs 1/(pi sqrt g) = {} (25%)",
                fmt(kappa.estimate),
                kappa.get("n_lo").unwrap_or(f64::NAN),
                kappa.get("n_hi").unwrap_or(f64::NAN),
                pref.map(|p| fmt(p.estimate)).unwrap_or_default(),
                pref.map(|p| fmt(p.reference.unwrap())).unwrap_or_default()
            ),
        },
        Outcome {
            id: 7,
            title: "capacity tilting",
            pass: ok_7 && tot_7 >= 4,
            detail: format!("a=0.4: {}/{tot_7} shared bins within 3 se of exp(-a^2 t / 2) mass ratio", tot_7 - fail_7),
        },
    )
}

fn c8_c9(scale: Scale) -> (Outcome, Outcome) {
    let (l, n) = if scale == Scale::Full {
        (48, 50_000)
    } else {
        (24, 20_000)
    };
    let mut cfg = rig(l, 2 * l / 3, n, 8);
    cfg.r_grid = [4, 6, 8, 12, 16]
        .into_iter()
        .filter(|&r| r <= cfg.lattice.obs_radius)
        .collect();
    cfg.a_grid = vec![0.0, 0.15, 0.2, 0.3];
    let rep = run("onearm", &cfg);
    let slope = rep.summary.named("onearm_slope").next().unwrap();
    // Collapse: needs r / xi(a) in {1, 4} with xi(a) = a^(-2) on Z^3.
    let l_obs = cfg.lattice.obs_radius as f64;
    let need = 4.0 * 0.15f64.powi(-2);
    let ratios: Vec<String> = rep
        .summary
        .named("psi_ratio")
        .filter(|r| r.get("a") != Some(0.0))
        .map(|r| {
            format!(
                "a={} r/xi={:.2}: {:.3}",
                r.get("a").unwrap(),
                r.get("r_over_xi").unwrap(),
                r.estimate
            )
        })
        .collect();
    (
        Outcome {
            id: 8,
            title: "one-arm exponent",
            pass: slope.pass == Some(true),
            detail: format!("L={l}, n={n}, r in {:?}: slope {} (window [-0.65, -0.35])", cfg.r_grid, fmt(slope.estimate)),
        },
        Outcome {
            id: 9,
            title: "xi-collapse",
            pass: false,
            detail: format!(
                "unattainable: r/xi(0.15) = 4 needs r = {need:.0} but L_obs = {l_obs}; largest r/xi reached: {}",
                ratios.last().cloned().unwrap_or_default()
            ),
        },
    )
}

fn c10(scale: Scale) -> Outcome {
    let (l, n) = if scale == Scale::Full {
        (48, 50_000)
    } else {
        (24, 20_000)
    };
    let mut cfg = rig(l, 2 * l / 3, n, 10);
    cfg.a_grid = vec![0.0];
    cfg.twopoint_fit_range = [2, 10];
    let rep = run("twopoint", &cfg);
    let s = &rep.summary;
    let decay = s.named("twopoint_decay").next().unwrap();
    let r2 = s.named("twopoint_r2").next().unwrap();
    let c = s.named("twopoint_constant").next().unwrap();
    Outcome {
        id: 10,
        title: "two-point function",
        pass: decay.pass == Some(true) && r2.pass == Some(true),
        detail: format!(
            "L={l}, d in [2, {}]: decay {} (window [-1.35, -0.7]); arcsin fit R^2 {} (>= 0.98), c = {} reported vs 2/pi = {}",
            decay.get("d_hi").unwrap(),
            fmt(decay.estimate),
            fmt(r2.estimate),
            fmt(c.estimate),
            fmt(2.0 / std::f64::consts::PI)
        ),
    }
}

fn c11(scale: Scale) -> Outcome {
    let n = if scale == Scale::Full { 20_000 } else { 4_000 };
    let mut cfg = rig(10, 8, n, 11);
    cfg.r_grid = vec![2];
    cfg.lambda_factor = 4.0;
    cfg.u_grid = vec![0.25, 1.0];
    let rep = run("locuniq", &cfg);
    let (ok, total, failed) = all_pass(rep.summary.named("emptiness"));
    Outcome {
        id: 11,
        title: "interlacement emptiness",
        pass: ok && total == 10,
        detail: format!(
            "5 sets x u in {{0.25, 1}}, n={n}: {}/{total} within 4 se of exp(-u cap)",
            total - failed
        ),
    }
}

fn c12(scale: Scale) -> Outcome {
    let n = if scale == Scale::Full { 10_000 } else { 2_000 };
    let mut cfg = rig(10, 8, n, 12);
    cfg.r_grid = vec![2];
    cfg.lambda_factor = 4.0;
    cfg.u_grid = vec![0.1, 0.2, 0.3, 10.0];
    let rep = run("locuniq", &cfg);
    let s = &rep.summary;
    let mono = s.named("locuniq_monotone").next().unwrap();
    let thr: Vec<&EstimateRecord> = s
        .named("locuniq_failure")
        .filter(|r| r.pass.is_some())
        .collect();
    let probs: Vec<String> = s
        .named("locuniq_failure")
        .map(|r| format!("u={}: {:.4}", r.get("u").unwrap(), r.estimate))
        .collect();
    Outcome {
        id: 12,
        title: "local uniqueness",
        pass: mono.pass == Some(true)
            && !thr.is_empty()
            && thr.iter().all(|r| r.pass == Some(true)),
        detail: format!(
            "R=2, lambda=4, n={n}: P(failure) {}; strictly decreasing and < 0.05 once u R^nu >= 20",
            probs.join(", ")
        ),
    }
}

fn c13(scale: Scale) -> Outcome {
    let n = if scale == Scale::Full {
        100_000
    } else {
        20_000
    };
    let mut cfg = rig(8, 7, n, 13);
    cfg.a_grid = vec![0.2, 0.4];
    cfg.r_k = 3;
    cfg.r0 = 2;
    cfg.patch_radius = 5;
    let rep = run("diffcheck", &cfg);
    let (ok, total, failed) = all_pass(rep.summary.named("diff_check"));
    let worst = rep
        .summary
        .named("diff_check")
        .map(|r| r.estimate.abs() / (r.accept.unwrap()[1] - r.reference.unwrap()))
        .fold(0.0, f64::max);
    Outcome {
        id: 13,
        title: "differential formula",
        pass: ok && total == 4,
        detail: format!(
            "a in {{0.2, 0.4}}, h=0.05, n={n}: {}/{total} finite differences within 3 combined se of -a E[cap F]; worst ratio {}",
            total - failed,
            fmt(worst)
        ),
    }
}

fn c14(scale: Scale) -> Outcome {
    let n = if scale == Scale::Full { 50_000 } else { 10_000 };
    let mut cfg = rig(10, 9, n, 14);
    cfg.a_grid = vec![-0.1, 0.0, 0.1];
    cfg.b_grid = vec![0.1, 0.2, 0.3];
    cfg.r_k = 8;
    cfg.r0 = 4;
    let rep = run("cominequality", &cfg);
    let (ok, total, failed) = all_pass(rep.summary.named("com_margin"));
    Outcome {
        id: 14,
        title: "change-of-measure inequality",
        pass: ok && total == 9,
        detail: format!(
            "r_K=8, r0=4, n={n}: {}/{total} (a, b) pairs with left >= right - 3 se",
            total - failed
        ),
    }
}

fn c15(started: Instant) -> Outcome {
    let mut cfg = rig(8, 5, 400, 15);
    cfg.r_grid = vec![1, 2, 4];
    let bytes = |cfg: &ExperimentConfig, name: &str| {
        let r = run(name, cfg);
        (r.summary.to_json(), r.samples.to_csv())
    };
    let mut same = true;
    for name in ["theta0", "onearm", "twopoint", "capacity"] {
        let mut c = cfg.clone();
        if name == "capacity" {
            c.m = 4;
            c.n_samples = 100;
        }
        same &= bytes(&c, name) == bytes(&c, name);
        let mut w = c.clone();
        w.workers = 3;
        let (j1, c1) = bytes(&c, name);
        let (j3, c3) = bytes(&w, name);
        same &= c1 == c3 && j1.replace("\"workers\": 1", "\"workers\": 3") == j3;
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        id: 15,
        title: "reproducibility",
        pass: same && secs < 7200.0,
        detail: format!(
            "identical JSON/CSV bytes on rerun and across 1 vs 3 workers: {same}; suite so far {secs:.0}s on {} core(s)",
            workers()
        ),
    }
}

fn main() {
    let scale = match std::env::var("ACCEPTANCE_SCALE").as_deref() {
        Ok("full") => Scale::Full,
        _ => Scale::Quick,
    };
    let started = Instant::now();
    let mut out: Vec<Outcome> = Vec::new();
    let report = |o: &Outcome| {
        println!(
            "criterion {:>2} {:<30} {}  {}",
            o.id,
            o.title,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        )
    };
    macro_rules! step {
        ($e:expr) => {{
            let o = $e;
            report(&o);
            out.push(o);
        }};
    }
    step!(c1(scale));
    step!(c2(scale));
    let (a, b) = c3_c4(scale);
    step!(a);
    step!(b);
    let (a, b, c) = c5_c6_c7(scale);
    step!(a);
    step!(b);
    step!(c);
    let (a, b) = c8_c9(scale);
    step!(a);
    step!(b);
    step!(c10(scale));
    step!(c11(scale));
    step!(c12(scale));
    step!(c13(scale));
    step!(c14(scale));
    step!(c15(started));
    let unexpected: Vec<usize> = out
        .iter()
        .filter(|o| !o.pass && !EXPECTED_FAIL.contains(&o.id))
        .map(|o| o.id)
        .collect();
    println!(
        "acceptance: {} passed, {} failed ({} expected), {:.0}s",
        out.iter().filter(|o| o.pass).count(),
        out.iter().filter(|o| !o.pass).count(),
        EXPECTED_FAIL.len(),
        started.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
