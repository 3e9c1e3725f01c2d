use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use qtangent_core::kernels::{qbm_transition_pdf, qou_transition_pdf, QouConditional};
use qtangent_core::QParams;

fn kernels(c: &mut Criterion) {
    for q in [0.0, 0.5, 0.9] {
        let p = QParams::new(q).unwrap();
        c.bench_function(&format!("qou_pdf q={q}"), |b| {
            b.iter(|| qou_transition_pdf(&p, black_box(0.1), black_box(0.3), black_box(-0.2)).unwrap())
        });
        c.bench_function(&format!("qbm_pdf q={q}"), |b| {
            b.iter(|| qbm_transition_pdf(&p, black_box(1.0), black_box(1.2), black_box(0.5), black_box(0.1)).unwrap())
        });
        let cond = QouConditional::new(p, 0.1, 0.3).unwrap();
        c.bench_function(&format!("qou_conditional_pdf q={q}"), |b| b.iter(|| cond.pdf(black_box(-0.2))));
    }
}

criterion_group!(benches, kernels);
criterion_main!(benches);
