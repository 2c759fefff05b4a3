use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use qghaar::funcspace::{inner_product, Primitive};
use qghaar::harness::run_check;
use qghaar::{algebra, par, ModelParams};

fn modes(c: &mut Criterion, name: &str, mut f: impl FnMut()) {
    let mut group = c.benchmark_group(name);
    group.sample_size(10);
    for (label, seq) in [("parallel", false), ("sequential", true)] {
        par::set_sequential(seq);
        group.bench_function(label, |b| b.iter(&mut f));
    }
    par::set_sequential(false);
    group.finish();
}

fn bench(c: &mut Criterion) {
    par::init_pool();
    let params = ModelParams::default();
    let f = Primitive::gaussian(1, 0.5, 0.1, 0.7).unit().to_function();
    let g = Primitive { kx: vec![2], ..Primitive::gaussian(1, 0.6, -0.1, 0.8) }.unit().to_function();

    modes(c, "twisted_product_norm", || {
        let h = algebra::twisted_mul(&params, &f, &g).unwrap().memoized();
        black_box(inner_product(&params, &h, &h).unwrap());
    });
    modes(c, "pentagon_1000", || {
        black_box(run_check(&params, "pentagon", 0).unwrap());
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);
