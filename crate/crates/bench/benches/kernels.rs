use std::hint::black_box;

use actsparse_bench::{Case, D_FF, D_MODEL, LEVELS};
use actsparse_core::kernels::{step2_into, step3_dense_input, step3_into, SparseActivationVector};
use actsparse_core::ActivationKind;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn step2(c: &mut Criterion) {
    let mut group = c.benchmark_group("step2");
    for level in LEVELS {
        let case = Case::new(D_MODEL, D_FF, level, 0);
        let fx = &case.fixture;
        let mut x1 = SparseActivationVector::with_capacity(D_FF, D_FF);
        group.bench_with_input(BenchmarkId::new("fused_sparse", level), &level, |b, _| {
            b.iter(|| step2_into(black_box(&fx.z), &fx.w_up_t, &fx.x, ActivationKind::Relu, &mut x1, &mut ()).unwrap())
        });
        let mut up = vec![0.0f32; D_FF];
        let mut out = vec![0.0f32; D_FF];
        group.bench_with_input(BenchmarkId::new("dense", level), &level, |b, _| {
            b.iter(|| {
                fx.w_up.matvec_into(black_box(&fx.x), &mut up).unwrap();
                for j in 0..D_FF {
                    out[j] = ActivationKind::Relu.apply(fx.z[j]) * up[j];
                }
                black_box(&out);
            })
        });
    }
    group.finish();
}

fn step3(c: &mut Criterion) {
    let mut group = c.benchmark_group("step3");
    for level in LEVELS {
        let case = Case::new(D_MODEL, D_FF, level, 0);
        let fx = &case.fixture;
        let mut out = vec![0.0f32; D_MODEL];
        group.bench_with_input(BenchmarkId::new("input_sparse", level), &level, |b, _| {
            b.iter(|| step3_into(black_box(&case.x1), &fx.w_down_cm, &mut out, &mut ()).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense_with_zeros", level), &level, |b, _| {
            b.iter(|| step3_dense_input(black_box(&case.x1_dense), &fx.w_down_cm, &mut out).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("dense", level), &level, |b, _| {
            b.iter(|| fx.w_down.matvec_into(black_box(&case.x1_dense), &mut out).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(30);
    targets = step2, step3
}
criterion_main!(benches);
