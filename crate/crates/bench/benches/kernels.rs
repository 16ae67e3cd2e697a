use cablegff::experiments::Rig;
use cablegff::gff::sample;
use cablegff::graph::{ball, build_lattice, refine};
use cablegff::interlacements::{loc_uniq, sample_soup};
use cablegff::percolation::{
    cluster_of_origin, open_edges, CapacityEngine, Explorer, Geometry, Route, Subdivision,
};
use cablegff::potential::{Domain, GreenPatch};
use cablegff::{BoxLattice, Censoring, LatticeSpec, Network, SampleKey, WeightMode};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn field_sampling(c: &mut Criterion) {
    let mut g = c.benchmark_group("gff_sample");
    for l in [8usize, 16, 32] {
        let d = Domain::spectral(BoxLattice::new(3, l));
        let mut i = 0;
        g.bench_with_input(BenchmarkId::new("spectral", l), &l, |b, _| {
            b.iter(|| {
                i += 1;
                black_box(sample(&d, SampleKey::new(1, i)))
            })
        });
    }
    let mut spec = LatticeSpec::unit(3, 8, 5);
    spec.weight_mode = WeightMode::UniformlyEllipticRandom {
        c_lo: 0.5,
        c_hi: 2.0,
        seed: 1,
    };
    let d = Domain::direct(build_lattice(&spec).unwrap()).unwrap();
    let mut i = 0;
    g.bench_function("cholesky/8", |b| {
        b.iter(|| {
            i += 1;
            black_box(sample(&d, SampleKey::new(1, i)))
        })
    });
    let refined = Domain::direct(
        refine(&build_lattice(&LatticeSpec::unit(3, 6, 4)).unwrap(), 2)
            .unwrap()
            .graph,
    )
    .unwrap();
    g.bench_function("cholesky_refined_m2/6", |b| {
        b.iter(|| {
            i += 1;
            black_box(sample(&refined, SampleKey::new(1, i)))
        })
    });
    g.finish();
}

fn cluster_exploration(c: &mut Criterion) {
    let mut g = c.benchmark_group("cluster_of_origin");
    for l in [16usize, 24, 32] {
        let d = Domain::spectral(BoxLattice::new(3, l));
        let geom = Geometry::new(&d.net, 2 * l / 3);
        let mut ex = Explorer::new(d.net.vertex_count());
        let fields: Vec<_> = (0..64).map(|i| sample(&d, SampleKey::new(2, i))).collect();
        let mut i = 0;
        g.bench_with_input(BenchmarkId::new("a=0", l), &l, |b, _| {
            b.iter(|| {
                i = (i + 1) % fields.len();
                let f = &fields[i];
                let edges = open_edges(&d.net, &f.values, 0.0, SampleKey::new(2, i as u64));
                black_box(cluster_of_origin(&edges, &geom, Censoring::Boundary, &mut ex).volume)
            })
        });
    }
    g.finish();
}

fn potential_solves(c: &mut Criterion) {
    let mut g = c.benchmark_group("potential");
    let d = Domain::spectral(BoxLattice::new(3, 16));
    let o = d.net.origin();
    for r in [2usize, 4, 8] {
        let set = ball(&d.net, o, r).unwrap();
        g.bench_with_input(BenchmarkId::new("equilibrium_ball", r), &r, |b, _| {
            b.iter(|| black_box(d.equilibrium_measure(&set).unwrap().cap))
        });
    }
    g.bench_function("green_column/16", |b| {
        b.iter(|| black_box(d.green_column(o)))
    });
    g.finish();
}

fn cluster_capacity(c: &mut Criterion) {
    let d = Domain::spectral(BoxLattice::new(3, 8));
    let patch = GreenPatch::new(&d, d.net.origin(), 5).unwrap();
    let geom = Geometry::new(&d.net, 5);
    let mut ex = Explorer::new(d.net.vertex_count());
    // Bounded clusters whose cable tips all lie in the patch.
    let mut cases = Vec::new();
    for i in 0.. {
        let f = sample(&d, SampleKey::new(3, i));
        let edges = open_edges(&d.net, &f.values, 0.0, SampleKey::new(3, i));
        let cl = cluster_of_origin(&edges, &geom, Censoring::Boundary, &mut ex);
        if cl.is_bounded()
            && cl.vertices.len() > 3
            && cl.vertices.iter().all(|&x| d.net.norm1(x) < 5)
        {
            cases.push((f, i, cl.vertices));
        }
        if cases.len() == 8 {
            break;
        }
    }
    let subs = [
        Subdivision::Finite(1),
        Subdivision::Finite(8),
        Subdivision::Cable,
    ];
    let mut g = c.benchmark_group("cluster_capacity");
    for (route, name) in [(Route::Dense, "dense"), (Route::Sparse, "sparse")] {
        let mut engine = CapacityEngine::new(&d.net, Some(&patch));
        let mut k = 0;
        g.bench_function(name, |b| {
            b.iter(|| {
                k = (k + 1) % cases.len();
                let (f, i, set) = &cases[k];
                let edges = open_edges(&d.net, &f.values, 0.0, SampleKey::new(3, *i));
                let tips = engine.tips(&edges, set);
                black_box(engine.capacities(set, &tips, &subs, route).unwrap())
            })
        });
    }
    g.finish();
}

fn interlacements(c: &mut Criterion) {
    let Rig::Lattice(d) = Rig::new(&LatticeSpec::unit(3, 10, 8)).unwrap() else {
        unreachable!()
    };
    let o = d.net.origin();
    let window = ball(&d.net, o, 8).unwrap();
    let eq = d.equilibrium_measure(&window).unwrap();
    let mut i = 0;
    let mut g = c.benchmark_group("interlacements");
    g.bench_function("soup_u0.3_R2", |b| {
        b.iter(|| {
            i += 1;
            let soup = sample_soup(&d.net, &eq, 0.3, SampleKey::new(4, i)).unwrap();
            black_box(loc_uniq(&soup, &d.net, o, 2, 4.0).unwrap())
        })
    });
    g.finish();
}

criterion_group!(
    benches,
    field_sampling,
    cluster_exploration,
    potential_solves,
    cluster_capacity,
    interlacements
);
criterion_main!(benches);
