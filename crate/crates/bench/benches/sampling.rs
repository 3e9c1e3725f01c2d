use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use qtangent_core::kernels::QouConditional;
use qtangent_core::sampling::{build_cdf_with, CdfOptions};
use qtangent_core::simulate::{SamplerOptions, TransitionSampler};
use qtangent_core::QParams;

fn sampling(c: &mut Criterion) {
    let p = QParams::new(0.5).unwrap();
    let cond = QouConditional::new(p, 0.05, 0.4).unwrap();
    let support = qtangent_core::Support::new(p.x_minus(), p.x_plus()).unwrap();
    c.bench_function("cdf_table gauss5 n=512", |b| {
        b.iter(|| build_cdf_with(|y| cond.pdf(y), support, &CdfOptions::default()).unwrap())
    });
    let table = build_cdf_with(|y| cond.pdf(y), support, &CdfOptions::default()).unwrap();
    c.bench_function("cdf_table sample", |b| b.iter(|| table.sample(black_box(0.37))));
    // no cache reuse: every call builds a fresh table
    let cold = TransitionSampler::with_options(
        p,
        SamplerOptions {
            cache_capacity: 1,
            ..SamplerOptions::default()
        },
    )
    .unwrap();
    let mut x = 0.0;
    c.bench_function("qou transition draw, cold cache", |b| {
        b.iter(|| {
            x = (x + 0.0123) % 1.0;
            cold.sample_qou(0.01, black_box(x), 0.5).unwrap()
        })
    });
    let warm = TransitionSampler::new(p).unwrap();
    c.bench_function("qou transition draw, warm cache", |b| {
        b.iter(|| warm.sample_qou(0.01, black_box(0.25), 0.5).unwrap())
    });
}

criterion_group!(benches, sampling);
criterion_main!(benches);
