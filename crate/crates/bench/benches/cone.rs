use calmkit::cone::{ConeBlock, ProductCone};
use calmkit::sampling::{rng, structured_product_point};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("project");
    let cones = [
        ("orthant8", ConeBlock::Orthant { dim: 8, sign: calmkit::Sign::NonNeg }),
        ("soc5", ConeBlock::SecondOrder { dim: 5 }),
        ("psd4", ConeBlock::Psd { order: 4 }),
    ];
    for (name, block) in cones {
        let cone = ProductCone::single(block);
        let z = structured_product_point(&mut rng(1), &cone);
        let h = structured_product_point(&mut rng(2), &cone);
        group.bench_with_input(BenchmarkId::new("value", name), &z, |b, z| b.iter(|| cone.project(black_box(z))));
        group.bench_with_input(BenchmarkId::new("dirderiv", name), &(&z, &h), |b, (z, h)| {
            b.iter(|| cone.proj_dirderiv(black_box(z), black_box(h)))
        });
    }
    group.finish();
}

criterion_group!(benches, projection);
criterion_main!(benches);
