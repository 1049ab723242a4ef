use calmkit::perturbation::{error_bound_probe, strong_calmness_probe};
use calmkit::ProbeConfig;
use calmkit_bench::corpus_point;
use criterion::{criterion_group, criterion_main, Criterion};

fn probes(c: &mut Criterion) {
    let mut group = c.benchmark_group("probe");
    group.sample_size(10);
    let cfg = ProbeConfig { samples: 1000, seed: 1, ..Default::default() };
    for (file, point) in [("p1", "critical"), ("p3", "unique")] {
        let (prog, k) = corpus_point(file, point);
        group.bench_function(format!("errorbound/{file}"), |b| b.iter(|| error_bound_probe(&prog, &k, &cfg)));
        group.bench_function(format!("strongcalm/{file}"), |b| b.iter(|| strong_calmness_probe(&prog, &k, &cfg)));
    }
    group.finish();
}

criterion_group!(benches, probes);
criterion_main!(benches);
