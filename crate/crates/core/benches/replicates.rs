use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use strainwars_core::contact_process::{init_single, run, SimParams, Strain};
use strainwars_core::replicate::{map_range, replicate_seed, with_parallelism};
use strainwars_core::topology::Topology;

const REPLICATES: u64 = 64;

fn ensemble(c: &mut Criterion) {
    let ring = Topology::torus(1, 200).unwrap();
    let init = init_single(&ring, Strain::One, ring.origin()).unwrap();
    let params = SimParams::new(2.0, 0.0, 20.0);
    let one = |i: u64| run(&ring, &init, &params, replicate_seed(7, i)).unwrap().events;

    let mut g = c.benchmark_group("survival_ensemble");
    g.sample_size(10);
    g.bench_function("sequential", |b| {
        b.iter(|| black_box((0..REPLICATES).map(one).sum::<u64>()))
    });
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    for t in [1, threads] {
        g.bench_with_input(BenchmarkId::new("map_range", t), &t, |b, &t| {
            b.iter(|| with_parallelism(t, || black_box(map_range(0, REPLICATES, one).iter().sum::<u64>())))
        });
    }
    g.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
